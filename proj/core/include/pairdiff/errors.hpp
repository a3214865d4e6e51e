#pragma once

#include <stdexcept>
#include <string>

namespace pairdiff {

// Malformed or inconsistent input data (CSV parse failures, dimension
// mismatches, missing truth columns). CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure of a fit (no active pairs, degenerate knots, empty
// smoothing window, insufficient pairs for folds). CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pairdiff

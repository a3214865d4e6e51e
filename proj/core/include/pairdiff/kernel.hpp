#pragma once

#include <string>
#include <string_view>

namespace pairdiff {

enum class KernelFamily { box, epanechnikov };

// Bounded-support symmetric density kernel. Both families integrate to
// one and vanish outside [-support_radius, support_radius], which is what
// makes the sorted sliding-window pair enumeration sub-quadratic.
struct Kernel {
    KernelFamily family = KernelFamily::box;

    double eval(double w) const;
    double support_radius() const;

    std::string_view name() const;
    static Kernel parse(std::string_view name); // throws DataError on unknown name
};

} // namespace pairdiff

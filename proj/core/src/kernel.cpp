#include "pairdiff/kernel.hpp"

#include <cmath>

#include "pairdiff/errors.hpp"

namespace pairdiff {

double Kernel::eval(double w) const {
    switch (family) {
    case KernelFamily::box:
        // Unit-mass box on [-1/2, 1/2], boundary inclusive.
        return std::abs(w) <= 0.5 ? 1.0 : 0.0;
    case KernelFamily::epanechnikov:
        return std::abs(w) <= 1.0 ? 0.75 * (1.0 - w * w) : 0.0;
    }
    return 0.0;
}

double Kernel::support_radius() const {
    return family == KernelFamily::box ? 0.5 : 1.0;
}

std::string_view Kernel::name() const {
    return family == KernelFamily::box ? "box" : "epanechnikov";
}

Kernel Kernel::parse(std::string_view name) {
    if (name == "box")
        return Kernel{KernelFamily::box};
    if (name == "epanechnikov")
        return Kernel{KernelFamily::epanechnikov};
    throw DataError("unknown kernel '" + std::string(name) + "' (expected box|epanechnikov)");
}

} // namespace pairdiff

#include "pairdiff/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pairdiff/errors.hpp"

namespace pairdiff {

BsplineBasis BsplineBasis::quantile(const Eigen::VectorXd& W, int degree, int n_interior) {
    if (degree < 1)
        throw DataError("spline degree must be at least 1");
    if (n_interior < 0)
        throw DataError("number of interior knots must be nonnegative");
    if (W.size() < 2)
        throw DataError("need at least 2 observations for a spline basis");

    std::vector<double> sorted(W.data(), W.data() + W.size());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (!(hi > lo))
        throw NumericalError("degenerate knots: W has zero range");

    BsplineBasis b;
    b.degree_ = degree;
    b.n_basis_ = n_interior + degree + 1;
    b.knots_.resize(2 * (degree + 1) + n_interior);

    for (int t = 0; t <= degree; ++t) {
        b.knots_[t] = lo;
        b.knots_[b.knots_.size() - 1 - t] = hi;
    }
    // Interior knots at quantiles k/(n_interior+1), linearly interpolated.
    double prev = lo;
    for (int k = 1; k <= n_interior; ++k) {
        const double q = static_cast<double>(k) / static_cast<double>(n_interior + 1);
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const auto idx = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(idx);
        const double knot = idx + 1 < sorted.size()
                                ? sorted[idx] * (1.0 - frac) + sorted[idx + 1] * frac
                                : sorted[idx];
        if (!(knot > prev) || !(knot < hi))
            throw NumericalError("degenerate knots: duplicated W quantiles");
        b.knots_[degree + k] = knot;
        prev = knot;
    }
    return b;
}

Eigen::VectorXd BsplineBasis::eval(double w) const {
    const Eigen::Index K = n_basis_;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(K);

    const double lo = knots_[0];
    const double hi = knots_[knots_.size() - 1];
    w = std::clamp(w, lo, hi);

    // Find the knot span [knots_[span], knots_[span+1]) containing w,
    // with the right-closed convention at the upper boundary.
    Eigen::Index span = degree_;
    const Eigen::Index last = K - 1; // last valid span start
    while (span < last && w >= knots_[span + 1])
        ++span;

    // Cox-de Boor recursion over the active window.
    std::vector<double> vals(static_cast<std::size_t>(degree_) + 1, 0.0);
    vals[0] = 1.0;
    for (int d = 1; d <= degree_; ++d) {
        double saved = 0.0;
        for (int r = 0; r < d; ++r) {
            const Eigen::Index left = span - d + 1 + r;
            const double den = knots_[left + d] - knots_[left];
            const double alpha = den > 0.0 ? (w - knots_[left]) / den : 0.0;
            const double tmp = vals[static_cast<std::size_t>(r)];
            vals[static_cast<std::size_t>(r)] = saved + (1.0 - alpha) * tmp;
            saved = alpha * tmp;
        }
        vals[static_cast<std::size_t>(d)] = saved;
    }
    for (int r = 0; r <= degree_; ++r) {
        const Eigen::Index idx = span - degree_ + r;
        if (idx >= 0 && idx < K)
            out[idx] = vals[static_cast<std::size_t>(r)];
    }
    return out;
}

Eigen::MatrixXd BsplineBasis::design(const Eigen::VectorXd& w) const {
    Eigen::MatrixXd B(w.size(), n_basis_);
    for (Eigen::Index i = 0; i < w.size(); ++i)
        B.row(i) = eval(w[i]).transpose();
    return B;
}

} // namespace pairdiff

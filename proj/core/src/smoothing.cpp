#include "pairdiff/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pairdiff/errors.hpp"

namespace pairdiff {

double silverman_bandwidth(const Eigen::VectorXd& W) {
    const double n = static_cast<double>(W.size());
    const double mean = W.mean();
    const double var = (W.array() - mean).square().sum() / (n - 1.0);
    return 1.06 * std::sqrt(var) * std::pow(n, -0.2);
}

Eigen::VectorXd nadaraya_watson(const Eigen::VectorXd& W, const Eigen::VectorXd& z,
                                const Eigen::VectorXd& grid, double bandwidth,
                                const Kernel& kernel) {
    if (z.size() != W.size())
        throw DataError("smoother inputs disagree in length");
    if (!(bandwidth > 0.0))
        throw DataError("smoother bandwidth must be positive");
    Eigen::VectorXd out(grid.size());
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index i = 0; i < W.size(); ++i) {
            const double k = kernel.eval((W[i] - grid[g]) / bandwidth);
            num += k * z[i];
            den += k;
        }
        if (den <= 0.0)
            throw NumericalError("empty smoothing window at w = " + std::to_string(grid[g]));
        out[g] = num / den;
    }
    return out;
}

Eigen::MatrixXd loo_box_smooth(const Eigen::VectorXd& W, const Eigen::MatrixXd& Z, double bandwidth) {
    if (Z.rows() != W.size())
        throw DataError("smoother inputs disagree in length");
    if (!(bandwidth > 0.0))
        throw DataError("smoother bandwidth must be positive");
    const Eigen::Index n = W.size();
    const Eigen::Index p = Z.cols();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return W[a] != W[b] ? W[a] < W[b] : a < b; });

    // Box kernel of support [-1/2, 1/2]: the window around W_i is
    // |W_l - W_i| <= bandwidth/2, all weights equal.
    const double half = 0.5 * bandwidth;
    std::vector<Eigen::Index> lo(static_cast<std::size_t>(n)), hi(static_cast<std::size_t>(n));
    {
        Eigen::Index a = 0, b = 0;
        for (Eigen::Index r = 0; r < n; ++r) {
            const double w0 = W[order[static_cast<std::size_t>(r)]];
            while (a < n && W[order[static_cast<std::size_t>(a)]] < w0 - half)
                ++a;
            while (b < n && W[order[static_cast<std::size_t>(b)]] <= w0 + half)
                ++b;
            lo[static_cast<std::size_t>(r)] = a;
            hi[static_cast<std::size_t>(r)] = b; // exclusive
            if (b - a - 1 < 1)
                throw NumericalError("empty smoothing window around W = " + std::to_string(w0) +
                                     "; increase the smoother bandwidth");
        }
    }

    Eigen::MatrixXd out(n, p);
    Eigen::VectorXd prefix(n + 1);
    for (Eigen::Index j = 0; j < p; ++j) {
        prefix[0] = 0.0;
        for (Eigen::Index r = 0; r < n; ++r)
            prefix[r + 1] = prefix[r] + Z(order[static_cast<std::size_t>(r)], j);
        for (Eigen::Index r = 0; r < n; ++r) {
            const Eigen::Index i = order[static_cast<std::size_t>(r)];
            const double sum = prefix[hi[static_cast<std::size_t>(r)]] - prefix[lo[static_cast<std::size_t>(r)]];
            const double cnt = static_cast<double>(hi[static_cast<std::size_t>(r)] - lo[static_cast<std::size_t>(r)] - 1);
            out(i, j) = (sum - Z(i, j)) / cnt;
        }
    }
    return out;
}

} // namespace pairdiff

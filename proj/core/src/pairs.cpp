#include "pairdiff/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pairdiff/errors.hpp"

namespace pairdiff {

double PairSet::weight_sum() const {
    return std::accumulate(weight.begin(), weight.end(), 0.0);
}

PairSet build_pairs(const Dataset& data, double h, const Kernel& kernel) {
    if (!(h > 0.0))
        throw DataError("bandwidth h must be positive");
    const Eigen::Index n = data.n();
    if (n < 2)
        throw DataError("need at least 2 observations to form pairs");

    // Sort by (W, index); ties in W are ordinary maximal-weight pairs.
    std::vector<std::int32_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const auto& W = data.W;
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return W[a] != W[b] ? W[a] < W[b] : a < b;
    });

    // Window cut slightly beyond the exact support; the kernel value
    // decides membership so the sweep agrees bit-for-bit with a brute
    // force scan of all (i, j).
    const double radius = h * kernel.support_radius();
    const double cut = radius * (1.0 + 1e-12);
    const double norm = 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1)); // 1/(n choose 2)
    const double inv_h = 1.0 / h;

    PairSet out;
    out.h = h;
    out.n_obs = n;
    for (std::size_t a = 0; a < order.size(); ++a) {
        const std::int32_t ia = order[a];
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const std::int32_t ib = order[b];
            const double dw = W[ib] - W[ia];
            if (dw > cut)
                break;
            const double k = kernel.eval((W[ia] - W[ib]) * inv_h);
            if (k <= 0.0)
                continue;
            out.first.push_back(std::min(ia, ib));
            out.second.push_back(std::max(ia, ib));
            out.weight.push_back(norm * inv_h * k);
        }
    }
    return out;
}

namespace {

void check_beta(const Dataset& data, const Eigen::VectorXd& beta) {
    if (beta.size() != data.p())
        throw DataError("beta length differs from p");
}

void check_pairs(const Dataset& data, const PairSet& pairs) {
    if (pairs.n_obs != data.n())
        throw DataError("PairSet was built for a different number of observations");
}

} // namespace

double loss(const Dataset& data, const PairSet& pairs, const Eigen::VectorXd& beta) {
    check_beta(data, beta);
    check_pairs(data, pairs);
    const Eigen::VectorXd v = data.X * beta; // fitted linear part per observation
    double acc = 0.0;
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto i = pairs.first[m];
        const auto j = pairs.second[m];
        const double r = (data.Y[i] - data.Y[j]) - (v[i] - v[j]);
        acc += pairs.weight[m] * r * r;
    }
    return acc;
}

Eigen::VectorXd gradient(const Dataset& data, const PairSet& pairs, const Eigen::VectorXd& beta) {
    check_beta(data, beta);
    check_pairs(data, pairs);
    const Eigen::VectorXd v = data.X * beta;
    // Scatter weighted residuals to the endpoints, then one mat-vec:
    // grad_k = -2 sum_m w_m (X_ik - X_jk) r_m = -2 X' t.
    Eigen::VectorXd t = Eigen::VectorXd::Zero(data.n());
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto i = pairs.first[m];
        const auto j = pairs.second[m];
        const double wr = pairs.weight[m] * ((data.Y[i] - data.Y[j]) - (v[i] - v[j]));
        t[i] += wr;
        t[j] -= wr;
    }
    return -2.0 * (data.X.transpose() * t);
}

Eigen::VectorXd u_stat_g(const Dataset& data, const PairSet& pairs) {
    check_pairs(data, pairs);
    if (!data.g_values)
        throw DataError("u_stat_g requires g_values attached to the dataset");
    const auto& g = *data.g_values;
    Eigen::VectorXd t = Eigen::VectorXd::Zero(data.n());
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto i = pairs.first[m];
        const auto j = pairs.second[m];
        const double wg = pairs.weight[m] * (g[i] - g[j]);
        t[i] += wg;
        t[j] -= wg;
    }
    return data.X.transpose() * t;
}

Eigen::VectorXd u_stat_noise(const Dataset& data, const PairSet& pairs) {
    check_pairs(data, pairs);
    const Eigen::VectorXd u = data.noise_from_truth();
    Eigen::VectorXd t = Eigen::VectorXd::Zero(data.n());
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto i = pairs.first[m];
        const auto j = pairs.second[m];
        const double wu = pairs.weight[m] * (u[i] - u[j]);
        t[i] += wu;
        t[j] -= wu;
    }
    return data.X.transpose() * t;
}

} // namespace pairdiff

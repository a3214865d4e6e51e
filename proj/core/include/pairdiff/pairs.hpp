#pragma once

#include <cstdint>
#include <vector>

#include "pairdiff/dataset.hpp"
#include "pairdiff/kernel.hpp"

namespace pairdiff {

// Kernel-active observation pairs realizing the pairwise-difference loss
// as a weighted least squares problem. Every stored pair has i < j and
// weight = (n choose 2)^-1 * h^-1 * K((W_i - W_j)/h) > 0; pairs whose
// kernel value is zero are not stored. Differences (Y_i - Y_j, X_i - X_j)
// are formed on demand from the Dataset, never materialized.
struct PairSet {
    std::vector<std::int32_t> first;  // i
    std::vector<std::int32_t> second; // j, with i < j
    std::vector<double> weight;
    double h = 0.0;
    Eigen::Index n_obs = 0;

    std::size_t size() const { return weight.size(); }
    bool empty() const { return weight.empty(); }
    double weight_sum() const;
};

// Enumerates the active pairs by sorting W and sweeping a sliding window,
// so the cost is O(n log n + #active pairs) for bounded-support kernels.
// Throws DataError for h <= 0 or n < 2.
PairSet build_pairs(const Dataset& data, double h, const Kernel& kernel);

// Weighted squared pairwise-difference loss
//   sum_m weight_m * ((Y_i - Y_j) - (X_i - X_j)' beta)^2.
double loss(const Dataset& data, const PairSet& pairs, const Eigen::VectorXd& beta);

// Gradient of loss: component k is -2 sum_m weight_m * Xd_mk * residual_m.
Eigen::VectorXd gradient(const Dataset& data, const PairSet& pairs, const Eigen::VectorXd& beta);

// U-statistic driven by the nonparametric component:
//   component k = sum_m weight_m * Xd_mk * (g(W_i) - g(W_j)).
// Requires g_values (simulation data); throws DataError otherwise.
Eigen::VectorXd u_stat_g(const Dataset& data, const PairSet& pairs);

// Noise counterpart: component k = sum_m weight_m * Xd_mk * (u_i - u_j)
// with u recovered from the attached truth. Throws DataError if the truth
// fields are missing.
Eigen::VectorXd u_stat_noise(const Dataset& data, const PairSet& pairs);

} // namespace pairdiff

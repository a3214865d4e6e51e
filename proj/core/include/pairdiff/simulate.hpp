#pragma once

#include <cstdint>

#include "pairdiff/dataset.hpp"

namespace pairdiff {

// One synthetic data-generating process. Scenarios:
//   1: g(w) = 2(exp(2w) + sin(10w)),             Sigma = I,        u ~ N(0,1)
//   2: like 1 but shifted down by 6 for w <= 0,  Sigma = I,        u ~ N(0,1)
//   3: g(w) = 10 w^(1/3) (real cube root),       Sigma = I,        u ~ N(0,1)
//   4: like 2,                                   Sigma AR(1) 0.3,  u ~ N(0,1)
//   5: like 1,                                   Sigma = I,        u ~ t(3)
// W is always Unif[-0.5, 0.5], independent of X and u.
struct ScenarioSpec {
    int scenario_id = 1;   // 1..5
    Eigen::Index n = 200;
    Eigen::Index p = 1024;
    Eigen::Index s = 10;   // 0 allowed: beta* = 0
    std::uint64_t seed = 0;

    void validate() const; // throws DataError
};

// First s entries form the arithmetic sequence from 5 down to 0.1, the
// rest are zero; s = 1 gives a single 5, s = 0 an all-zero vector.
Eigen::VectorXd true_beta(Eigen::Index p, Eigen::Index s);

double g_eval(int scenario_id, double w);

// Draws a dataset with beta_star and g_values attached. Fully
// deterministic given spec.seed: W, X and u come from independent
// splitmix64 streams derived from (seed, variable tag).
Dataset generate(const ScenarioSpec& spec);

} // namespace pairdiff

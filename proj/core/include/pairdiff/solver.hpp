#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "pairdiff/dataset.hpp"
#include "pairdiff/kernel.hpp"
#include "pairdiff/pairs.hpp"

namespace pairdiff {

struct FitConfig {
    std::optional<double> h;      // empty = default_bandwidth(n, p)
    std::optional<double> lambda; // empty = select by cross-validation
    double tol = 1e-7;            // on max coordinate change scaled by coordinate curvature
    std::int64_t max_iter = 100000; // full coordinate cycles
    int n_lambda = 100;
    double lambda_min_ratio = 1e-3;
    int cv_folds = 10;
    std::uint64_t cv_seed = 0;
    bool standardize = false;

    void validate() const; // throws DataError
};

struct FitResult {
    Eigen::VectorXd beta;
    double lambda_used = 0.0;
    double h_used = 0.0;
    std::vector<int> active_set; // indices k with beta[k] != 0, ascending
    std::int64_t n_iterations = 0;
    bool converged = false;
    double objective = 0.0;     // loss + lambda * ||beta||_1
    double kkt_violation = 0.0; // max KKT residual at return
};

// Tuning-insensitive bandwidth 2 sqrt(ln p / n). Natural logarithm.
double default_bandwidth(Eigen::Index n, Eigen::Index p);

// sign(z) * max(|z| - gamma, 0).
double soft_threshold(double z, double gamma);

// Smallest lambda whose lasso solution is identically zero:
// max_k |2 sum_m w_m Xd_mk zd_m|.
double lambda_max(const Dataset& data, const PairSet& pairs);

// Decreasing log-spaced grid of n_lambda values from lmax down to
// lmax * lambda_min_ratio.
std::vector<double> lambda_grid(double lmax, const FitConfig& cfg);

// Penalized pairwise-difference fit at a fixed lambda by cyclic
// coordinate descent with an active-set strategy. Non-convergence at
// max_iter is reported through FitResult::converged, not an error.
// Throws NumericalError on an empty PairSet.
FitResult solve(const Dataset& data, const PairSet& pairs, double lambda, const FitConfig& cfg,
                const Eigen::VectorXd* warm_start = nullptr);

// Warm-started pathwise solve over lambda_grid(lambda_max(...), cfg).
// The first entry's solution is the zero vector.
std::vector<std::pair<double, FitResult>> lambda_path(const Dataset& data, const PairSet& pairs,
                                                      const FitConfig& cfg);

// How cross-validation folds are formed. `pair` partitions the active
// pairs directly (the reformulate-then-CV recipe; observations leak
// across folds). `observation` partitions observations: training pairs
// live within training observations, validation pairs within validation
// observations.
enum class CvPolicy { pair, observation };

struct CvCurve {
    std::vector<double> lambda;     // grid, decreasing
    std::vector<double> mean_error; // mean held-out error per grid value
};

struct CvResult {
    double lambda_star = 0.0;
    FitResult fit; // refit on all pairs at lambda_star
    CvCurve curve;
};

// K-fold cross-validation over the lambda path. Held-out error is the
// weighted squared pairwise residual normalized by the held-out weight
// sum; ties within 1e-12 resolve to the largest (sparsest) lambda.
// Deterministic given cfg.cv_seed; fold fits may run on `threads`
// workers without affecting the result.
CvResult cv_select(const Dataset& data, double h, const Kernel& kernel, const FitConfig& cfg,
                   CvPolicy policy = CvPolicy::pair, int threads = 1);

// Plain weighted least-squares lasso on observation rows
// (sum_i w_i (y_i - x_i'beta)^2 + lambda ||beta||_1). The baselines reuse
// the pairwise solver machinery through this surface.
FitResult solve_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                    double lambda, const FitConfig& cfg, const Eigen::VectorXd* warm_start = nullptr);
double lambda_max_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w);
std::vector<std::pair<double, FitResult>> lambda_path_wls(const Eigen::MatrixXd& X,
                                                          const Eigen::VectorXd& y,
                                                          const Eigen::VectorXd& w,
                                                          const FitConfig& cfg);
CvResult cv_select_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                       const FitConfig& cfg, int threads = 1);

// One-call pairwise-difference fit: builds pairs at cfg.h (or the
// default bandwidth), optionally standardizes columns by pair-weighted
// scale, then solves at cfg.lambda or cross-validates.
FitResult fit_prd(const Dataset& data, const Kernel& kernel, const FitConfig& cfg,
                  CvPolicy policy = CvPolicy::pair, int threads = 1);

} // namespace pairdiff

#pragma once

#include <cstdint>
#include <optional>

#include "pairdiff/bspline.hpp"
#include "pairdiff/dataset.hpp"
#include "pairdiff/solver.hpp"

namespace pairdiff {

// Two-stage projection estimator: leave-one-out box-kernel smoothing of
// the response and of every X column against W, then an ordinary lasso
// on the residuals.
struct ProjectionConfig {
    std::optional<double> smoother_bandwidth; // empty = Silverman rule
    std::optional<double> lambda;             // empty = cross-validation
    int cv_folds = 10;
    std::uint64_t cv_seed = 0;
    FitConfig lasso; // tolerance/path knobs for the stage-2 lasso
};

FitResult projection_fit(const Dataset& data, const ProjectionConfig& cfg, int threads = 1);

// Joint least squares with an l1 penalty on beta and a ridge penalty on
// the spline coefficients for g, solved by profiling out the spline part.
struct SplineConfig {
    int degree = 3;
    int n_interior_knots = 6; // quantile-placed on W
    std::optional<double> mu; // empty = generalized cross-validation
    std::optional<double> lambda;
    int cv_folds = 10;
    std::uint64_t cv_seed = 0;
    FitConfig lasso;
};

struct BsplineFit {
    FitResult fit;
    BsplineBasis basis;
    Eigen::VectorXd theta; // spline coefficients at the returned beta
    double mu_used = 0.0;

    double g_hat(double w) const { return basis.eval(w).dot(theta); }
};

BsplineFit bspline_fit(const Dataset& data, const SplineConfig& cfg, int threads = 1);

// Lambda paths of the two baselines on their respective transformed
// problems, for support-versus-error sweeps.
std::vector<std::pair<double, FitResult>> projection_lambda_path(const Dataset& data,
                                                                 const ProjectionConfig& cfg);
std::vector<std::pair<double, FitResult>> bspline_lambda_path(const Dataset& data,
                                                              const SplineConfig& cfg);

} // namespace pairdiff

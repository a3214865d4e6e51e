#include "pairdiff/baselines.hpp"

#include <cmath>
#include <limits>

#include "pairdiff/errors.hpp"
#include "pairdiff/smoothing.hpp"

namespace pairdiff {

namespace {

struct Stage1 {
    Eigen::MatrixXd V;  // column residuals X_j - m_j(W)
    Eigen::VectorXd v0; // response residual Y - m_0(W)
    double bandwidth = 0.0;
};

Stage1 projection_stage1(const Dataset& data, const ProjectionConfig& cfg) {
    data.validate();
    if (data.n() < 10)
        throw DataError("projection estimator needs at least 10 observations");
    Stage1 s;
    s.bandwidth = cfg.smoother_bandwidth ? *cfg.smoother_bandwidth : silverman_bandwidth(data.W);
    if (!(s.bandwidth > 0.0))
        throw DataError("smoother bandwidth must be positive");
    s.V = data.X - loo_box_smooth(data.W, data.X, s.bandwidth);
    s.v0 = data.Y - loo_box_smooth(data.W, data.Y, s.bandwidth).col(0);
    return s;
}

Eigen::VectorXd unit_mean_weights(Eigen::Index n) {
    return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

FitConfig stage2_config(const FitConfig& lasso, int cv_folds, std::uint64_t cv_seed) {
    FitConfig cfg = lasso;
    cfg.cv_folds = cv_folds;
    cfg.cv_seed = cv_seed;
    return cfg;
}

} // namespace

FitResult projection_fit(const Dataset& data, const ProjectionConfig& cfg, int threads) {
    const Stage1 s = projection_stage1(data, cfg);
    const Eigen::VectorXd w = unit_mean_weights(data.n());
    const FitConfig lcfg = stage2_config(cfg.lasso, cfg.cv_folds, cfg.cv_seed);

    FitResult res = cfg.lambda ? solve_wls(s.V, s.v0, w, *cfg.lambda, lcfg, nullptr)
                               : cv_select_wls(s.V, s.v0, w, lcfg, threads).fit;
    res.h_used = s.bandwidth;
    return res;
}

std::vector<std::pair<double, FitResult>> projection_lambda_path(const Dataset& data,
                                                                 const ProjectionConfig& cfg) {
    const Stage1 s = projection_stage1(data, cfg);
    auto path = lambda_path_wls(s.V, s.v0, unit_mean_weights(data.n()),
                                stage2_config(cfg.lasso, cfg.cv_folds, cfg.cv_seed));
    for (auto& [lam, fit] : path)
        fit.h_used = s.bandwidth;
    return path;
}

namespace {

struct RidgeSmoother {
    Eigen::MatrixXd B; // n x K design
    Eigen::LDLT<Eigen::MatrixXd> factor; // of B'B + n mu^2 I
    double mu = 0.0;

    void init(const Eigen::MatrixXd& design, double mu_val, Eigen::Index n) {
        B = design;
        mu = mu_val;
        Eigen::MatrixXd A = B.transpose() * B;
        A.diagonal().array() += static_cast<double>(n) * mu_val * mu_val;
        factor.compute(A);
    }

    Eigen::VectorXd theta(const Eigen::VectorXd& r) const { return factor.solve(B.transpose() * r); }
    Eigen::VectorXd smooth(const Eigen::VectorXd& r) const { return B * theta(r); }
    double trace_s() const { return factor.solve(B.transpose() * B).trace(); }
};

double gcv_score(const RidgeSmoother& s, const Eigen::VectorXd& y) {
    const double n = static_cast<double>(y.size());
    const double rss = (y - s.smooth(y)).squaredNorm();
    const double denom = 1.0 - s.trace_s() / n;
    return (rss / n) / (denom * denom);
}

struct Profiled {
    BsplineBasis basis;
    RidgeSmoother smoother;
    Eigen::MatrixXd xt; // (I - S)^(1/2) X
    Eigen::VectorXd yt; // (I - S)^(1/2) Y
    double mu = 0.0;
};

// Profiling the spline coefficients out of
//   (1/n)||Y - X b - B th||^2 + mu^2 ||th||^2 + lambda ||b||_1
// leaves (1/n) r'(I - S) r + lambda ||b||_1 with S = B(B'B + n mu^2 I)^-1 B'.
// S is not idempotent for mu > 0, so the equivalent lasso runs on data
// transformed by the symmetric square root of I - S (which coincides
// with I - S itself at mu = 0).
Profiled bspline_profile(const Dataset& data, const SplineConfig& cfg) {
    data.validate();
    const Eigen::Index n = data.n();

    Profiled prof;
    prof.basis = BsplineBasis::quantile(data.W, cfg.degree, cfg.n_interior_knots);
    if (n <= prof.basis.size())
        throw DataError("need more observations than spline basis functions");
    const Eigen::MatrixXd B = prof.basis.design(data.W);

    if (cfg.mu) {
        if (*cfg.mu < 0.0)
            throw DataError("mu must be nonnegative");
        prof.mu = *cfg.mu;
    } else {
        // GCV of the ridge smoother applied to the response, log grid
        // 1e-4 .. 10.
        const int n_mu = 16;
        double best = std::numeric_limits<double>::infinity();
        for (int t = 0; t < n_mu; ++t) {
            const double cand = std::exp(std::log(1e-4) + (std::log(10.0) - std::log(1e-4)) *
                                                              static_cast<double>(t) /
                                                              static_cast<double>(n_mu - 1));
            RidgeSmoother s;
            s.init(B, cand, n);
            const double score = gcv_score(s, data.Y);
            if (score < best) {
                best = score;
                prof.mu = cand;
            }
        }
    }

    prof.smoother.init(B, prof.mu, n);

    Eigen::MatrixXd Q = -B * prof.smoother.factor.solve(B.transpose());
    Q.diagonal().array() += 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Q);
    const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd M = eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();

    prof.yt = M * data.Y;
    prof.xt = M * data.X;
    return prof;
}

} // namespace

BsplineFit bspline_fit(const Dataset& data, const SplineConfig& cfg, int threads) {
    Profiled prof = bspline_profile(data, cfg);
    const Eigen::VectorXd w = unit_mean_weights(data.n());
    const FitConfig lcfg = stage2_config(cfg.lasso, cfg.cv_folds, cfg.cv_seed);

    BsplineFit out;
    out.fit = cfg.lambda ? solve_wls(prof.xt, prof.yt, w, *cfg.lambda, lcfg, nullptr)
                         : cv_select_wls(prof.xt, prof.yt, w, lcfg, threads).fit;
    out.basis = prof.basis;
    out.mu_used = prof.mu;
    out.theta = prof.smoother.theta(data.Y - data.X * out.fit.beta);
    return out;
}

std::vector<std::pair<double, FitResult>> bspline_lambda_path(const Dataset& data,
                                                              const SplineConfig& cfg) {
    Profiled prof = bspline_profile(data, cfg);
    return lambda_path_wls(prof.xt, prof.yt, unit_mean_weights(data.n()),
                           stage2_config(cfg.lasso, cfg.cv_folds, cfg.cv_seed));
}

} // namespace pairdiff

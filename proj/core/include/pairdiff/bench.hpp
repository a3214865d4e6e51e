#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pairdiff/baselines.hpp"
#include "pairdiff/simulate.hpp"
#include "pairdiff/solver.hpp"

namespace pairdiff {

enum class Method { prd, projection, bspline };
std::string_view method_name(Method m);
Method parse_method(std::string_view name); // throws DataError

// Tuning shared by every benchmark fit.
struct MethodConfigs {
    Kernel kernel{};
    FitConfig prd;        // h empty = default bandwidth, lambda empty = CV
    CvPolicy cv_policy = CvPolicy::pair;
    ProjectionConfig projection;
    SplineConfig bspline;
};

struct BenchRow {
    int scenario_id = 0;
    Eigen::Index n = 0, p = 0, s = 0;
    Method method = Method::prd;
    int replication = 0;
    std::uint64_t seed = 0;
    double l2_error = 0.0;
    Eigen::Index support_size = 0;
    Eigen::Index true_positive_count = 0;
    double lambda_used = 0.0;
    double h_used = 0.0;
    bool converged = false;
    std::string error;             // nonempty when the replication's fit failed
    double runtime_seconds = 0.0;  // wall time; written to a separate timing file
};

struct CellAggregate {
    std::size_t rows = 0;          // successful replications
    double mean_l2 = 0.0;
    double se_l2 = 0.0;            // sd / sqrt(rows)
    double mean_support = 0.0;
    double mean_true_positive = 0.0;
    double nonconverged_rate = 0.0;
    double error_rate = 0.0;
};
CellAggregate aggregate(const std::vector<BenchRow>& rows);

struct LambdaPolicy {
    enum class Kind { cv, fixed, at_lambda_max } kind = Kind::cv;
    double value = 0.0; // for Kind::fixed

    static LambdaPolicy cv() { return {}; }
    static LambdaPolicy fixed(double v) { return {Kind::fixed, v}; }
    static LambdaPolicy at_lambda_max() { return {Kind::at_lambda_max, 0.0}; }
};

// Runs one (scenario, method) cell. Replication r draws its dataset from
// a seed derived from (base_seed, r); fit errors are recorded in the row
// rather than aborting the cell. at_lambda_max is only meaningful for
// the pairwise-difference method.
std::vector<BenchRow> run_cell(const ScenarioSpec& tmpl, Method method, int replications,
                               std::uint64_t base_seed, const LambdaPolicy& lambda_policy,
                               const MethodConfigs& cfgs, int threads = 1);

// Mean (support size, l2 error) per grid position of the lambda path,
// averaged over replications; the grid is indexed by lambda/lambda_max
// so it is comparable across replications.
struct SweepPoint {
    std::size_t grid_index = 0;
    double lambda_ratio = 0.0;
    double mean_support = 0.0;
    double mean_l2 = 0.0;
};
std::vector<SweepPoint> path_sweep_curve(const ScenarioSpec& tmpl, Method method, int replications,
                                         std::uint64_t base_seed, const MethodConfigs& cfgs,
                                         int threads = 1);

// Mean error of the CV-tuned pairwise-difference fit over an (n, p) grid
// at fixed sparsity; one curve per p.
struct ScalingPoint {
    Eigen::Index p = 0, n = 0;
    double mean_l2 = 0.0;
    double se_l2 = 0.0;
};
std::vector<ScalingPoint> scaling_grid(const std::vector<Eigen::Index>& p_values,
                                       const std::vector<Eigen::Index>& n_values, Eigen::Index s,
                                       int scenario_id, int replications, std::uint64_t base_seed,
                                       const MethodConfigs& cfgs, int threads = 1);

// Empirical sup-norms of the loss gradient and of the two U-statistics
// evaluated at the true coefficient, per sample size, with the bandwidth
// budget h + sqrt(ln p / n) alongside.
struct DiagnosticCell {
    Eigen::Index n = 0, p = 0;
    double grad_sup_mean = 0.0;      // mean_r max_k |grad_k L(beta*, h)|
    double u_g_dev_sup_mean = 0.0;   // mean_r max_k |U_k - mean over reps|
    double u_noise_sup_mean = 0.0;   // mean_r max_k |U1_k|
    double h = 0.0;
    double rate = 0.0;               // h + sqrt(ln p / n)
    std::vector<double> grad_sup;    // per replication, for paired checks
};
std::vector<DiagnosticCell> perturbation_diagnostic(int scenario_id, Eigen::Index p, Eigen::Index s,
                                                    const std::vector<Eigen::Index>& n_values,
                                                    int replications, std::uint64_t base_seed,
                                                    const Kernel& kernel, int threads = 1);

// ---- plan file ------------------------------------------------------

struct ExperimentPlan {
    std::vector<ScenarioSpec> scenarios; // per-spec seed fields are ignored
    std::vector<Method> methods;
    int replications = 100;
    std::uint64_t base_seed = 1;
    std::string lambda_policy = "cv"; // "cv" | "path-sweep"
    std::optional<double> h;          // empty = auto

    struct Figure1 {
        bool enabled = false;
        std::vector<Eigen::Index> p_values, n_values;
        Eigen::Index s = 10;
        int scenario_id = 2;
        int replications = 50;
    } figure1;

    struct Diagnostic {
        bool enabled = false;
        int scenario_id = 1;
        Eigen::Index p = 256;
        Eigen::Index s = 10;
        std::vector<Eigen::Index> n_values;
        int replications = 50;
    } diagnostic;

    std::string kernel = "box";
};

ExperimentPlan load_plan(const std::string& path); // throws DataError

// Executes the plan into out_dir: rows.csv + aggregate.csv (+ one
// plot-ready CSV per requested figure). Wall-clock timings go to
// timings.csv, which is the only output that is not byte-reproducible.
void run_plan(const ExperimentPlan& plan, const std::string& out_dir, int threads = 1);

} // namespace pairdiff

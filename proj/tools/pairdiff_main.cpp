#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pairdiff/baselines.hpp"
#include "pairdiff/bench.hpp"
#include "pairdiff/errors.hpp"
#include "pairdiff/io.hpp"
#include "pairdiff/simulate.hpp"
#include "pairdiff/smoothing.hpp"
#include "pairdiff/solver.hpp"
#include "pairdiff/threading.hpp"

namespace {

using namespace pairdiff;

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 0; // 0 = hardware concurrency
    std::string out_dir = ".";

    int effective_threads() const {
        if (const char* env = std::getenv("PAIRDIFF_THREADS")) {
            try {
                return resolve_threads(std::stoi(env));
            } catch (const std::exception&) {
                throw DataError("PAIRDIFF_THREADS must be an integer");
            }
        }
        return resolve_threads(threads);
    }

    std::string out_path(const std::string& name) const {
        namespace fs = std::filesystem;
        if (fs::path(name).is_absolute())
            return name;
        fs::create_directories(out_dir);
        return (fs::path(out_dir) / name).string();
    }
};

double parse_number_or(const std::string& text, const std::string& keyword, const char* what,
                       bool allow_keyword, bool& is_keyword) {
    if (allow_keyword && text == keyword) {
        is_keyword = true;
        return 0.0;
    }
    is_keyword = false;
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size())
            throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw CLI::ValidationError(std::string(what) + ": expected a number or '" + keyword + "', got '" +
                                   text + "'");
    }
}

std::string iso_timestamp_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

// ---- fit ------------------------------------------------------------

struct FitArgs {
    std::string data_path;
    std::string method = "prd";
    std::string kernel = "box";
    std::string h = "auto";
    std::string lambda = "cv";
    std::string mu = "gcv";
    std::string smoother_bw = "auto";
    std::string cv_policy = "pair";
    std::string out = "model.json";
    std::string timestamp;
    double tol = 1e-7;
    std::int64_t max_iter = 100000;
    int n_lambda = 100;
    double lambda_min_ratio = 1e-3;
    int cv_folds = 10;
    int degree = 3;
    int knots = 6;
    int top_k = 0;
    bool standardize = false;
    bool log_y = false;
};

void run_fit(const FitArgs& args, const GlobalOpts& global) {
    Dataset data = read_data_csv(args.data_path);
    if (args.log_y) {
        if ((data.Y.array() <= 0.0).any())
            throw DataError("--log-y requires a strictly positive response");
        data.Y = data.Y.array().log();
    }

    bool h_auto = false, lambda_cv = false, mu_gcv = false, bw_auto = false;
    const double h_val = parse_number_or(args.h, "auto", "--h", true, h_auto);
    const double lambda_val = parse_number_or(args.lambda, "cv", "--lambda", true, lambda_cv);
    const double mu_val = parse_number_or(args.mu, "gcv", "--mu", true, mu_gcv);
    const double bw_val = parse_number_or(args.smoother_bw, "auto", "--smoother-bw", true, bw_auto);

    FitConfig cfg;
    if (!h_auto)
        cfg.h = h_val;
    if (!lambda_cv)
        cfg.lambda = lambda_val;
    cfg.tol = args.tol;
    cfg.max_iter = args.max_iter;
    cfg.n_lambda = args.n_lambda;
    cfg.lambda_min_ratio = args.lambda_min_ratio;
    cfg.cv_folds = args.cv_folds;
    cfg.cv_seed = global.seed;
    cfg.standardize = args.standardize;

    CvPolicy policy;
    if (args.cv_policy == "pair")
        policy = CvPolicy::pair;
    else if (args.cv_policy == "obs")
        policy = CvPolicy::observation;
    else
        throw DataError("--cv-policy must be pair or obs");

    const Kernel kernel = Kernel::parse(args.kernel);
    const int threads = global.effective_threads();

    FitResult fit;
    if (args.method == "prd") {
        fit = fit_prd(data, kernel, cfg, policy, threads);
    } else if (args.method == "projection") {
        ProjectionConfig pcfg;
        if (!bw_auto)
            pcfg.smoother_bandwidth = bw_val;
        if (!lambda_cv)
            pcfg.lambda = lambda_val;
        pcfg.cv_folds = args.cv_folds;
        pcfg.cv_seed = global.seed;
        pcfg.lasso = cfg;
        fit = projection_fit(data, pcfg, threads);
    } else if (args.method == "bspline") {
        SplineConfig scfg;
        scfg.degree = args.degree;
        scfg.n_interior_knots = args.knots;
        if (!mu_gcv)
            scfg.mu = mu_val;
        if (!lambda_cv)
            scfg.lambda = lambda_val;
        scfg.cv_folds = args.cv_folds;
        scfg.cv_seed = global.seed;
        scfg.lasso = cfg;
        fit = bspline_fit(data, scfg, threads).fit;
    } else {
        throw DataError("--method must be prd, projection or bspline");
    }

    ModelFile model;
    model.method = args.method;
    model.kernel = args.kernel;
    model.h = fit.h_used;
    model.lambda = fit.lambda_used;
    model.n = data.n();
    model.p = data.p();
    for (const int k : fit.active_set)
        model.beta.emplace_back(k + 1, fit.beta[k]);
    model.timestamp = args.timestamp == "now" ? iso_timestamp_now() : args.timestamp;
    model.config_echo = {
        {"h", args.h},
        {"lambda", args.lambda},
        {"tol", format_double(args.tol)},
        {"max_iter", std::to_string(args.max_iter)},
        {"n_lambda", std::to_string(args.n_lambda)},
        {"lambda_min_ratio", format_double(args.lambda_min_ratio)},
        {"cv_folds", std::to_string(args.cv_folds)},
        {"cv_policy", args.cv_policy},
        {"seed", std::to_string(global.seed)},
        {"standardize", args.standardize ? "1" : "0"},
        {"log_y", args.log_y ? "1" : "0"},
    };
    if (args.method == "projection")
        model.config_echo["smoother_bw"] = args.smoother_bw;
    if (args.method == "bspline") {
        model.config_echo["degree"] = std::to_string(args.degree);
        model.config_echo["knots"] = std::to_string(args.knots);
        model.config_echo["mu"] = args.mu;
    }
    const std::string out = global.out_path(args.out);
    write_model_json(out, model);

    std::cout << "method: " << args.method << "\n"
              << "n: " << data.n() << "  p: " << data.p() << "\n"
              << "h: " << format_double(fit.h_used) << "\n"
              << "lambda: " << format_double(fit.lambda_used) << "\n"
              << "support size: " << fit.active_set.size() << "\n"
              << "objective: " << format_double(fit.objective) << "\n"
              << "kkt violation: " << format_double(fit.kkt_violation) << "\n"
              << "converged: " << (fit.converged ? "yes" : "no") << "\n"
              << "model: " << out << "\n";

    if (args.top_k > 0) {
        std::vector<std::pair<double, int>> mags;
        for (const int k : fit.active_set)
            mags.emplace_back(std::abs(fit.beta[k]), k);
        std::sort(mags.begin(), mags.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        const std::size_t top = std::min<std::size_t>(mags.size(), static_cast<std::size_t>(args.top_k));
        std::cout << "top " << top << " coefficients by |value|:\n";
        for (std::size_t t = 0; t < top; ++t)
            std::cout << "  x" << (mags[t].second + 1) << ": "
                      << format_double(fit.beta[mags[t].second]) << "\n";
    }
}

// ---- gcurve ---------------------------------------------------------

struct GcurveArgs {
    std::string data_path;
    std::string model_path;
    std::string bw = "auto";
    std::string kernel = "box";
    int grid_size = 100;
    std::string out = "gcurve.csv";
};

void run_gcurve(const GcurveArgs& args, const GlobalOpts& global) {
    const Dataset data = read_data_csv(args.data_path);
    const ModelFile model = read_model_json(args.model_path);
    if (model.p != data.p())
        throw DataError("model p=" + std::to_string(model.p) + " does not match data p=" +
                        std::to_string(data.p()));
    if (args.grid_size < 1)
        throw DataError("--grid-size must be positive");

    const Eigen::VectorXd beta = model.dense_beta();
    Eigen::VectorXd resid = data.Y - data.X * beta;

    // Standardize; near-zero variance short-circuits to a flat zero curve.
    const double mean = resid.mean();
    const double sd = std::sqrt((resid.array() - mean).square().sum() /
                                std::max<double>(1.0, static_cast<double>(resid.size() - 1)));
    const double y_scale = std::max(1.0, std::sqrt(data.Y.squaredNorm() / static_cast<double>(data.n())));
    const bool degenerate = sd <= 1e-12 * y_scale;

    const double lo = data.W.minCoeff();
    const double hi = data.W.maxCoeff();
    Eigen::VectorXd grid(args.grid_size);
    if (args.grid_size == 1) {
        grid[0] = 0.5 * (lo + hi);
    } else {
        for (int t = 0; t < args.grid_size; ++t)
            grid[t] = lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(args.grid_size - 1);
    }

    Eigen::VectorXd curve;
    if (degenerate) {
        curve = Eigen::VectorXd::Zero(args.grid_size);
    } else {
        const Eigen::VectorXd std_resid = (resid.array() - mean) / sd;
        bool bw_auto = false;
        double bw = parse_number_or(args.bw, "auto", "--bw", true, bw_auto);
        if (bw_auto)
            bw = silverman_bandwidth(data.W);
        curve = nadaraya_watson(data.W, std_resid, grid, bw, Kernel::parse(args.kernel));
    }

    const std::string out = global.out_path(args.out);
    std::ofstream os(out);
    if (!os)
        throw DataError("cannot write '" + out + "'");
    os << "w,residual\n";
    for (int t = 0; t < args.grid_size; ++t)
        os << format_double(grid[t]) << ',' << format_double(curve[t]) << "\n";
    std::cout << "gcurve: " << out << "\n";
}

// ---- simulate -------------------------------------------------------

struct SimArgs {
    int scenario = 1;
    Eigen::Index n = 200;
    Eigen::Index p = 1024;
    Eigen::Index s = 10;
    std::string out = "data.csv";
};

void run_simulate(const SimArgs& args, const GlobalOpts& global) {
    ScenarioSpec spec;
    spec.scenario_id = args.scenario;
    spec.n = args.n;
    spec.p = args.p;
    spec.s = args.s;
    spec.seed = global.seed;
    const Dataset data = generate(spec);
    const std::string out = global.out_path(args.out);
    const std::string truth = truth_path_for(out);
    write_data_csv(out, data);
    write_truth_csv(truth, data);
    std::cout << "data: " << out << "\n"
              << "truth: " << truth << "\n";
}

// ---- bench ----------------------------------------------------------

struct BenchArgs {
    std::string plan_path;
    int reps = -1; // -1 = keep plan value
    bool seed_given = false;
};

void run_bench(const BenchArgs& args, const GlobalOpts& global) {
    ExperimentPlan plan = load_plan(args.plan_path);
    if (args.reps > 0) {
        plan.replications = args.reps;
        plan.figure1.replications = args.reps;
        plan.diagnostic.replications = args.reps;
    }
    if (args.seed_given)
        plan.base_seed = global.seed;
    run_plan(plan, global.out_dir, global.effective_threads());
    std::cout << "bench outputs in " << global.out_dir << "\n";
}

// ---- diagnose -------------------------------------------------------

struct DiagnoseArgs {
    int scenario = 1;
    Eigen::Index p = 256;
    Eigen::Index s = 10;
    std::vector<Eigen::Index> n_values = {100, 200, 400, 800};
    int reps = 50;
    std::string kernel = "box";
    std::string out; // empty = stdout only
};

void run_diagnose(const DiagnoseArgs& args, const GlobalOpts& global) {
    const auto cells = perturbation_diagnostic(args.scenario, args.p, args.s, args.n_values,
                                               args.reps, global.seed, Kernel::parse(args.kernel),
                                               global.effective_threads());
    std::ostringstream table;
    table << "n,p,grad_sup_norm,u_g_dev_sup_norm,u_noise_sup_norm,h,h_plus_rate\n";
    for (const auto& c : cells)
        table << c.n << ',' << c.p << ',' << format_double(c.grad_sup_mean) << ','
              << format_double(c.u_g_dev_sup_mean) << ',' << format_double(c.u_noise_sup_mean)
              << ',' << format_double(c.h) << ',' << format_double(c.rate) << "\n";
    std::cout << table.str();
    if (!args.out.empty()) {
        const std::string out = global.out_path(args.out);
        std::ofstream os(out);
        if (!os)
            throw DataError("cannot write '" + out + "'");
        os << table.str();
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pairwise-difference estimation for high-dimensional partially linear models"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print help"); // keep --h free for the bandwidth flag

    GlobalOpts global;
    app.add_option("--seed", global.seed, "base RNG seed")->capture_default_str();
    app.add_option("--threads", global.threads,
                   "worker threads (0 = all cores; env PAIRDIFF_THREADS overrides)")
        ->capture_default_str();
    app.add_option("--out-dir", global.out_dir, "directory for output files")->capture_default_str();

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "fit a model to a CSV dataset");
    fit_cmd->set_help_flag("--help", "print help");
    fit_cmd->add_option("data", fit_args.data_path, "input CSV (y,w,x1..xp)")->required();
    fit_cmd->add_option("--method", fit_args.method, "prd|projection|bspline")->capture_default_str();
    fit_cmd->add_option("--kernel", fit_args.kernel, "box|epanechnikov")->capture_default_str();
    fit_cmd->add_option("--h", fit_args.h, "bandwidth or 'auto' (2 sqrt(ln p / n))")
        ->capture_default_str();
    fit_cmd->add_option("--lambda", fit_args.lambda, "penalty level or 'cv'")->capture_default_str();
    fit_cmd->add_option("--cv-folds", fit_args.cv_folds, "cross-validation folds")
        ->capture_default_str();
    fit_cmd->add_option("--cv-policy", fit_args.cv_policy, "pair|obs fold construction")
        ->capture_default_str();
    fit_cmd->add_option("--tol", fit_args.tol, "solver tolerance")->capture_default_str();
    fit_cmd->add_option("--max-iter", fit_args.max_iter, "max coordinate cycles")
        ->capture_default_str();
    fit_cmd->add_option("--n-lambda", fit_args.n_lambda, "path grid size")->capture_default_str();
    fit_cmd->add_option("--lambda-min-ratio", fit_args.lambda_min_ratio, "path floor ratio")
        ->capture_default_str();
    fit_cmd->add_flag("--standardize", fit_args.standardize,
                      "scale columns by pair-weighted sd before fitting");
    fit_cmd->add_flag("--log-y", fit_args.log_y, "fit on log-transformed response");
    fit_cmd->add_option("--smoother-bw", fit_args.smoother_bw,
                        "projection stage-1 bandwidth or 'auto' (Silverman)")
        ->capture_default_str();
    fit_cmd->add_option("--degree", fit_args.degree, "spline degree")->capture_default_str();
    fit_cmd->add_option("--knots", fit_args.knots, "spline interior knots")->capture_default_str();
    fit_cmd->add_option("--mu", fit_args.mu, "spline ridge level or 'gcv'")->capture_default_str();
    fit_cmd->add_option("--top-k", fit_args.top_k, "print the k largest coefficients")
        ->capture_default_str();
    fit_cmd->add_option("--timestamp", fit_args.timestamp,
                        "model timestamp string, or 'now' (default empty for reproducible output)");
    fit_cmd->add_option("--out", fit_args.out, "model file path")->capture_default_str();

    GcurveArgs gcurve_args;
    auto* gcurve_cmd = app.add_subcommand("gcurve", "smoothed standardized residuals against w");
    gcurve_cmd->add_option("data", gcurve_args.data_path, "input CSV")->required();
    gcurve_cmd->add_option("model", gcurve_args.model_path, "fitted model JSON")->required();
    gcurve_cmd->add_option("--bw", gcurve_args.bw, "smoother bandwidth or 'auto'")
        ->capture_default_str();
    gcurve_cmd->add_option("--kernel", gcurve_args.kernel, "box|epanechnikov")->capture_default_str();
    gcurve_cmd->add_option("--grid-size", gcurve_args.grid_size, "output grid size")
        ->capture_default_str();
    gcurve_cmd->add_option("--out", gcurve_args.out, "output CSV path")->capture_default_str();

    SimArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "draw a synthetic dataset");
    sim_cmd->add_option("--scenario", sim_args.scenario, "scenario id 1..5")->capture_default_str();
    sim_cmd->add_option("--n", sim_args.n, "observations")->capture_default_str();
    sim_cmd->add_option("--p", sim_args.p, "covariates")->capture_default_str();
    sim_cmd->add_option("--s", sim_args.s, "sparsity")->capture_default_str();
    sim_cmd->add_option("--out", sim_args.out, "output CSV (truth goes to *.truth.csv)")
        ->capture_default_str();

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "run an experiment plan");
    bench_cmd->add_option("--plan", bench_args.plan_path, "plan JSON file")->required();
    bench_cmd->add_option("--reps", bench_args.reps, "override plan replications");

    DiagnoseArgs diag_args;
    auto* diag_cmd = app.add_subcommand("diagnose", "gradient / U-statistic concentration table");
    diag_cmd->add_option("--scenario", diag_args.scenario, "scenario id")->capture_default_str();
    diag_cmd->add_option("--p", diag_args.p, "covariates")->capture_default_str();
    diag_cmd->add_option("--s", diag_args.s, "sparsity")->capture_default_str();
    diag_cmd->add_option("--n-list", diag_args.n_values, "sample sizes")->delimiter(',');
    diag_cmd->add_option("--reps", diag_args.reps, "replications per cell")->capture_default_str();
    diag_cmd->add_option("--kernel", diag_args.kernel, "box|epanechnikov")->capture_default_str();
    diag_cmd->add_option("--out", diag_args.out, "also write the table to this CSV");

    try {
        app.parse(argc, argv);
        bench_args.seed_given = app.count("--seed") > 0;
        if (fit_cmd->parsed())
            run_fit(fit_args, global);
        else if (gcurve_cmd->parsed())
            run_gcurve(gcurve_args, global);
        else if (sim_cmd->parsed())
            run_simulate(sim_args, global);
        else if (bench_cmd->parsed())
            run_bench(bench_args, global);
        else if (diag_cmd->parsed())
            run_diagnose(diag_args, global);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        app.exit(e);
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

#include "pairdiff/bench.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "pairdiff/errors.hpp"
#include "pairdiff/io.hpp"
#include "pairdiff/pairs.hpp"
#include "pairdiff/rng.hpp"
#include "pairdiff/smoothing.hpp"
#include "pairdiff/threading.hpp"

namespace pairdiff {

namespace {
constexpr std::uint64_t kRepSeedTag = 0x7265706cull; // replication seed stream
} // namespace

std::string_view method_name(Method m) {
    switch (m) {
    case Method::prd:
        return "prd";
    case Method::projection:
        return "projection";
    case Method::bspline:
        return "bspline";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    if (name == "prd")
        return Method::prd;
    if (name == "projection")
        return Method::projection;
    if (name == "bspline")
        return Method::bspline;
    throw DataError("unknown method '" + std::string(name) + "' (expected prd|projection|bspline)");
}

CellAggregate aggregate(const std::vector<BenchRow>& rows) {
    CellAggregate agg;
    double sum = 0.0, sumsq = 0.0, support = 0.0, tp = 0.0;
    std::size_t nonconv = 0, errors = 0;
    for (const auto& r : rows) {
        if (!r.error.empty()) {
            ++errors;
            continue;
        }
        ++agg.rows;
        sum += r.l2_error;
        sumsq += r.l2_error * r.l2_error;
        support += static_cast<double>(r.support_size);
        tp += static_cast<double>(r.true_positive_count);
        if (!r.converged)
            ++nonconv;
    }
    if (agg.rows > 0) {
        const double k = static_cast<double>(agg.rows);
        agg.mean_l2 = sum / k;
        if (agg.rows > 1) {
            const double var = std::max(0.0, (sumsq - k * agg.mean_l2 * agg.mean_l2) / (k - 1.0));
            agg.se_l2 = std::sqrt(var / k);
        }
        agg.mean_support = support / k;
        agg.mean_true_positive = tp / k;
        agg.nonconverged_rate = static_cast<double>(nonconv) / k;
    }
    if (!rows.empty())
        agg.error_rate = static_cast<double>(errors) / static_cast<double>(rows.size());
    return agg;
}

namespace {

Eigen::Index count_true_positives(const FitResult& fit, const Eigen::VectorXd& beta_star) {
    Eigen::Index tp = 0;
    for (const int k : fit.active_set)
        if (beta_star[k] != 0.0)
            ++tp;
    return tp;
}

FitResult fit_one(const Dataset& data, Method method, const LambdaPolicy& policy,
                  const MethodConfigs& cfgs) {
    switch (method) {
    case Method::prd: {
        FitConfig cfg = cfgs.prd;
        if (policy.kind == LambdaPolicy::Kind::fixed) {
            cfg.lambda = policy.value;
        } else if (policy.kind == LambdaPolicy::Kind::at_lambda_max) {
            const double h = cfg.h ? *cfg.h : default_bandwidth(data.n(), data.p());
            cfg.lambda = lambda_max(data, build_pairs(data, h, cfgs.kernel));
        }
        return fit_prd(data, cfgs.kernel, cfg, cfgs.cv_policy, 1);
    }
    case Method::projection: {
        ProjectionConfig cfg = cfgs.projection;
        if (policy.kind == LambdaPolicy::Kind::fixed)
            cfg.lambda = policy.value;
        else if (policy.kind == LambdaPolicy::Kind::at_lambda_max)
            throw DataError("at_lambda_max policy is only supported for prd");
        return projection_fit(data, cfg, 1);
    }
    case Method::bspline: {
        SplineConfig cfg = cfgs.bspline;
        if (policy.kind == LambdaPolicy::Kind::fixed)
            cfg.lambda = policy.value;
        else if (policy.kind == LambdaPolicy::Kind::at_lambda_max)
            throw DataError("at_lambda_max policy is only supported for prd");
        return bspline_fit(data, cfg, 1).fit;
    }
    }
    throw DataError("unknown method");
}

} // namespace

std::vector<BenchRow> run_cell(const ScenarioSpec& tmpl, Method method, int replications,
                               std::uint64_t base_seed, const LambdaPolicy& lambda_policy,
                               const MethodConfigs& cfgs, int threads) {
    if (replications < 1)
        throw DataError("replications must be at least 1");
    std::vector<BenchRow> rows(static_cast<std::size_t>(replications));
    parallel_for(static_cast<std::size_t>(replications), threads, [&](std::size_t r) {
        BenchRow& row = rows[r];
        row.scenario_id = tmpl.scenario_id;
        row.n = tmpl.n;
        row.p = tmpl.p;
        row.s = tmpl.s;
        row.method = method;
        row.replication = static_cast<int>(r);
        row.seed = derive_stream(base_seed, kRepSeedTag, r);

        ScenarioSpec spec = tmpl;
        spec.seed = row.seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Dataset data = generate(spec);
            const FitResult fit = fit_one(data, method, lambda_policy, cfgs);
            row.l2_error = (fit.beta - *data.beta_star).norm();
            row.support_size = static_cast<Eigen::Index>(fit.active_set.size());
            row.true_positive_count = count_true_positives(fit, *data.beta_star);
            row.lambda_used = fit.lambda_used;
            row.h_used = fit.h_used;
            row.converged = fit.converged;
        } catch (const std::exception& e) {
            row.error = e.what();
            row.l2_error = std::numeric_limits<double>::quiet_NaN();
        }
        row.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    return rows;
}

std::vector<SweepPoint> path_sweep_curve(const ScenarioSpec& tmpl, Method method, int replications,
                                         std::uint64_t base_seed, const MethodConfigs& cfgs,
                                         int threads) {
    if (replications < 1)
        throw DataError("replications must be at least 1");
    const FitConfig& base_cfg = cfgs.prd;
    const std::size_t n_grid = static_cast<std::size_t>(base_cfg.n_lambda);

    struct RepCurve {
        std::vector<double> support, l2;
        bool ok = false;
    };
    std::vector<RepCurve> curves(static_cast<std::size_t>(replications));

    parallel_for(static_cast<std::size_t>(replications), threads, [&](std::size_t r) {
        ScenarioSpec spec = tmpl;
        spec.seed = derive_stream(base_seed, kRepSeedTag, r);
        RepCurve& cur = curves[r];
        try {
            const Dataset data = generate(spec);
            std::vector<std::pair<double, FitResult>> path;
            switch (method) {
            case Method::prd: {
                FitConfig cfg = cfgs.prd;
                const double h = cfg.h ? *cfg.h : default_bandwidth(data.n(), data.p());
                path = lambda_path(data, build_pairs(data, h, cfgs.kernel), cfg);
                break;
            }
            case Method::projection: {
                ProjectionConfig cfg = cfgs.projection;
                cfg.lasso = base_cfg;
                path = projection_lambda_path(data, cfg);
                break;
            }
            case Method::bspline: {
                SplineConfig cfg = cfgs.bspline;
                cfg.lasso = base_cfg;
                path = bspline_lambda_path(data, cfg);
                break;
            }
            }
            cur.support.resize(path.size());
            cur.l2.resize(path.size());
            for (std::size_t t = 0; t < path.size(); ++t) {
                cur.support[t] = static_cast<double>(path[t].second.active_set.size());
                cur.l2[t] = (path[t].second.beta - *data.beta_star).norm();
            }
            cur.ok = true;
        } catch (const std::exception&) {
            cur.ok = false;
        }
    });

    std::vector<SweepPoint> out(n_grid);
    const double step = base_cfg.n_lambda > 1 ? std::log(base_cfg.lambda_min_ratio) /
                                                    static_cast<double>(base_cfg.n_lambda - 1)
                                              : 0.0;
    for (std::size_t t = 0; t < n_grid; ++t) {
        out[t].grid_index = t;
        out[t].lambda_ratio = std::exp(step * static_cast<double>(t));
        double sup = 0.0, l2 = 0.0;
        std::size_t k = 0;
        for (const auto& cur : curves) {
            if (!cur.ok || t >= cur.support.size())
                continue;
            sup += cur.support[t];
            l2 += cur.l2[t];
            ++k;
        }
        if (k > 0) {
            out[t].mean_support = sup / static_cast<double>(k);
            out[t].mean_l2 = l2 / static_cast<double>(k);
        }
    }
    return out;
}

std::vector<ScalingPoint> scaling_grid(const std::vector<Eigen::Index>& p_values,
                                       const std::vector<Eigen::Index>& n_values, Eigen::Index s,
                                       int scenario_id, int replications, std::uint64_t base_seed,
                                       const MethodConfigs& cfgs, int threads) {
    std::vector<ScalingPoint> out;
    for (const Eigen::Index p : p_values) {
        for (const Eigen::Index n : n_values) {
            ScenarioSpec tmpl;
            tmpl.scenario_id = scenario_id;
            tmpl.n = n;
            tmpl.p = p;
            tmpl.s = s;
            const std::uint64_t cell_seed = derive_stream(base_seed, static_cast<std::uint64_t>(p),
                                                          static_cast<std::uint64_t>(n));
            const auto rows =
                run_cell(tmpl, Method::prd, replications, cell_seed, LambdaPolicy::cv(), cfgs, threads);
            const CellAggregate agg = aggregate(rows);
            out.push_back({p, n, agg.mean_l2, agg.se_l2});
        }
    }
    return out;
}

std::vector<DiagnosticCell> perturbation_diagnostic(int scenario_id, Eigen::Index p, Eigen::Index s,
                                                    const std::vector<Eigen::Index>& n_values,
                                                    int replications, std::uint64_t base_seed,
                                                    const Kernel& kernel, int threads) {
    if (replications < 1)
        throw DataError("replications must be at least 1");
    std::vector<DiagnosticCell> out;
    for (const Eigen::Index n : n_values) {
        DiagnosticCell cell;
        cell.n = n;
        cell.p = p;
        cell.h = default_bandwidth(n, p);
        cell.rate = cell.h + std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
        cell.grad_sup.assign(static_cast<std::size_t>(replications), 0.0);

        std::vector<Eigen::VectorXd> u_stats(static_cast<std::size_t>(replications));
        std::vector<double> u1_sup(static_cast<std::size_t>(replications), 0.0);

        parallel_for(static_cast<std::size_t>(replications), threads, [&](std::size_t r) {
            ScenarioSpec spec;
            spec.scenario_id = scenario_id;
            spec.n = n;
            spec.p = p;
            spec.s = s;
            spec.seed = derive_stream(base_seed, kRepSeedTag, r);
            const Dataset data = generate(spec);
            const PairSet pairs = build_pairs(data, cell.h, kernel);
            cell.grad_sup[r] = gradient(data, pairs, *data.beta_star).cwiseAbs().maxCoeff();
            u_stats[r] = u_stat_g(data, pairs);
            u1_sup[r] = u_stat_noise(data, pairs).cwiseAbs().maxCoeff();
        });

        Eigen::VectorXd u_mean = Eigen::VectorXd::Zero(p);
        for (const auto& u : u_stats)
            u_mean += u;
        u_mean /= static_cast<double>(replications);

        double grad_acc = 0.0, udev_acc = 0.0, u1_acc = 0.0;
        for (std::size_t r = 0; r < u_stats.size(); ++r) {
            grad_acc += cell.grad_sup[r];
            udev_acc += (u_stats[r] - u_mean).cwiseAbs().maxCoeff();
            u1_acc += u1_sup[r];
        }
        cell.grad_sup_mean = grad_acc / static_cast<double>(replications);
        cell.u_g_dev_sup_mean = udev_acc / static_cast<double>(replications);
        cell.u_noise_sup_mean = u1_acc / static_cast<double>(replications);
        out.push_back(std::move(cell));
    }
    return out;
}

// ---- plan execution -------------------------------------------------

namespace {

std::vector<Eigen::Index> index_list(const nlohmann::json& arr) {
    std::vector<Eigen::Index> out;
    for (const auto& v : arr)
        out.push_back(v.get<Eigen::Index>());
    return out;
}

} // namespace

ExperimentPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }

    ExperimentPlan plan;
    try {
        for (const auto& sc : j.value("scenarios", nlohmann::json::array())) {
            ScenarioSpec spec;
            spec.scenario_id = sc.at("scenario_id").get<int>();
            spec.n = sc.at("n").get<Eigen::Index>();
            spec.p = sc.at("p").get<Eigen::Index>();
            spec.s = sc.at("s").get<Eigen::Index>();
            spec.validate();
            plan.scenarios.push_back(spec);
        }
        for (const auto& m : j.value("methods", nlohmann::json::array({"prd"})))
            plan.methods.push_back(parse_method(m.get<std::string>()));
        plan.replications = j.value("replications", 100);
        plan.base_seed = j.value("base_seed", std::uint64_t{1});
        plan.lambda_policy = j.value("lambda_policy", std::string{"cv"});
        if (plan.lambda_policy != "cv" && plan.lambda_policy != "path-sweep")
            throw DataError("lambda_policy must be cv or path-sweep");
        if (j.contains("h") && !j.at("h").is_null()) {
            if (j.at("h").is_string()) {
                if (j.at("h").get<std::string>() != "auto")
                    throw DataError("h must be a number or \"auto\"");
            } else {
                plan.h = j.at("h").get<double>();
            }
        }
        plan.kernel = j.value("kernel", std::string{"box"});
        if (j.contains("figure1")) {
            const auto& f = j.at("figure1");
            plan.figure1.enabled = true;
            plan.figure1.p_values = index_list(f.at("p_values"));
            plan.figure1.n_values = index_list(f.at("n_values"));
            plan.figure1.s = f.value("s", Eigen::Index{10});
            plan.figure1.scenario_id = f.value("scenario_id", 2);
            plan.figure1.replications = f.value("replications", 50);
        }
        if (j.contains("diagnostic")) {
            const auto& d = j.at("diagnostic");
            plan.diagnostic.enabled = true;
            plan.diagnostic.scenario_id = d.value("scenario_id", 1);
            plan.diagnostic.p = d.value("p", Eigen::Index{256});
            plan.diagnostic.s = d.value("s", Eigen::Index{10});
            plan.diagnostic.n_values = index_list(d.at("n_values"));
            plan.diagnostic.replications = d.value("replications", 50);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return plan;
}

namespace {

void write_rows_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    out << "scenario_id,n,p,s,method,replication,seed,l2_error,support_size,"
           "true_positive_count,lambda_used,h_used,converged,error\n";
    for (const auto& r : rows) {
        out << r.scenario_id << ',' << r.n << ',' << r.p << ',' << r.s << ','
            << method_name(r.method) << ',' << r.replication << ',' << r.seed << ','
            << format_double(r.l2_error) << ',' << r.support_size << ',' << r.true_positive_count
            << ',' << format_double(r.lambda_used) << ',' << format_double(r.h_used) << ','
            << (r.converged ? 1 : 0) << ',' << r.error << "\n";
    }
}

void write_timings_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    out << "scenario_id,n,p,s,method,replication,runtime_seconds\n";
    for (const auto& r : rows)
        out << r.scenario_id << ',' << r.n << ',' << r.p << ',' << r.s << ','
            << method_name(r.method) << ',' << r.replication << ','
            << format_double(r.runtime_seconds) << "\n";
}

struct CellKey {
    int scenario_id;
    Eigen::Index n, p, s;
    Method method;
};

void write_aggregate_csv(const std::string& path,
                         const std::vector<std::pair<CellKey, CellAggregate>>& cells) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    out << "scenario_id,n,p,s,method,replications,mean_l2_error,se_l2_error,mean_support_size,"
           "mean_true_positive,nonconverged_rate,error_rate\n";
    for (const auto& [key, agg] : cells) {
        out << key.scenario_id << ',' << key.n << ',' << key.p << ',' << key.s << ','
            << method_name(key.method) << ',' << agg.rows << ',' << format_double(agg.mean_l2)
            << ',' << format_double(agg.se_l2) << ',' << format_double(agg.mean_support) << ','
            << format_double(agg.mean_true_positive) << ',' << format_double(agg.nonconverged_rate)
            << ',' << format_double(agg.error_rate) << "\n";
    }
}

} // namespace

void run_plan(const ExperimentPlan& plan, const std::string& out_dir, int threads) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto out_path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    MethodConfigs cfgs;
    cfgs.kernel = Kernel::parse(plan.kernel);
    cfgs.prd.h = plan.h;

    if (plan.lambda_policy == "path-sweep") {
        for (const auto& tmpl : plan.scenarios) {
            for (const Method method : plan.methods) {
                const auto curve =
                    path_sweep_curve(tmpl, method, plan.replications, plan.base_seed, cfgs, threads);
                const std::string name = "path_sweep_scenario" + std::to_string(tmpl.scenario_id) +
                                         "_s" + std::to_string(tmpl.s) + "_" +
                                         std::string(method_name(method)) + ".csv";
                std::ofstream out(out_path(name));
                if (!out)
                    throw DataError("cannot write '" + name + "'");
                out << "grid_index,lambda_ratio,mean_support_size,mean_l2_error\n";
                for (const auto& pt : curve)
                    out << pt.grid_index << ',' << format_double(pt.lambda_ratio) << ','
                        << format_double(pt.mean_support) << ',' << format_double(pt.mean_l2) << "\n";
            }
        }
    } else if (!plan.scenarios.empty()) {
        std::vector<BenchRow> all_rows;
        std::vector<std::pair<CellKey, CellAggregate>> cells;
        for (const auto& tmpl : plan.scenarios) {
            for (const Method method : plan.methods) {
                const auto rows = run_cell(tmpl, method, plan.replications, plan.base_seed,
                                           LambdaPolicy::cv(), cfgs, threads);
                cells.push_back({CellKey{tmpl.scenario_id, tmpl.n, tmpl.p, tmpl.s, method},
                                 aggregate(rows)});
                all_rows.insert(all_rows.end(), rows.begin(), rows.end());
            }
        }
        write_rows_csv(out_path("rows.csv"), all_rows);
        write_aggregate_csv(out_path("aggregate.csv"), cells);
        write_timings_csv(out_path("timings.csv"), all_rows);
    }

    if (plan.figure1.enabled) {
        const auto grid =
            scaling_grid(plan.figure1.p_values, plan.figure1.n_values, plan.figure1.s,
                         plan.figure1.scenario_id, plan.figure1.replications, plan.base_seed, cfgs,
                         threads);
        std::ofstream out(out_path("figure1.csv"));
        if (!out)
            throw DataError("cannot write 'figure1.csv'");
        out << "p,n,mean_l2_error,se_l2_error\n";
        for (const auto& pt : grid)
            out << pt.p << ',' << pt.n << ',' << format_double(pt.mean_l2) << ','
                << format_double(pt.se_l2) << "\n";
    }

    if (plan.diagnostic.enabled) {
        const auto cells = perturbation_diagnostic(
            plan.diagnostic.scenario_id, plan.diagnostic.p, plan.diagnostic.s,
            plan.diagnostic.n_values, plan.diagnostic.replications, plan.base_seed, cfgs.kernel,
            threads);
        std::ofstream out(out_path("diagnostic.csv"));
        if (!out)
            throw DataError("cannot write 'diagnostic.csv'");
        out << "n,p,grad_sup_norm,u_g_dev_sup_norm,u_noise_sup_norm,h,h_plus_rate\n";
        for (const auto& c : cells)
            out << c.n << ',' << c.p << ',' << format_double(c.grad_sup_mean) << ','
                << format_double(c.u_g_dev_sup_mean) << ',' << format_double(c.u_noise_sup_mean)
                << ',' << format_double(c.h) << ',' << format_double(c.rate) << "\n";
    }
}

} // namespace pairdiff

// entromap command-line tool: fit an entropic transport map, evaluate a saved
// model, run estimator benchmarks, and self-check solver invariants.
//
// Exit codes: 0 success, 1 error, 2 partial (fit hit max-iter; bench had
// failed cells). Human summary goes to stdout, diagnostics to stderr, data
// only to files (written atomically). No environment variables are read.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <entromap/entromap.hpp>

namespace {

constexpr const char* kVersion = "entromap 1.0.0";

using namespace entromap;

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string source, target, out;
    double eps = 0.0;          // 0 = not given
    std::string eps_auto;      // "alpha_bar[,c]", empty = not given
    double tol = default_tol;
    std::size_t max_iter = default_max_iter;
};

std::pair<double, double> parse_auto_params(const std::string& s) {
    double alpha_bar = 3.0, c = 1.0;
    if (!s.empty()) {
        std::stringstream ss(s);
        std::string field;
        std::vector<double> vals;
        while (std::getline(ss, field, ',')) {
            try {
                vals.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw std::invalid_argument("--eps-auto: expected numbers, got '" + field + "'");
            }
        }
        if (vals.empty() || vals.size() > 2)
            throw std::invalid_argument("--eps-auto: expected 'alpha_bar' or 'alpha_bar,c'");
        alpha_bar = vals[0];
        if (vals.size() == 2) c = vals[1];
    }
    return {alpha_bar, c};
}

int run_fit(const FitArgs& a) {
    const PointCloud X = load_cloud(a.source);
    const PointCloud Y = load_cloud(a.target);
    double eps = a.eps;
    if (eps == 0.0) {
        const auto [alpha_bar, c] = parse_auto_params(a.eps_auto);
        eps = epsilon_rule(X.size(), X.dim(), alpha_bar, c);
    }
    const auto [model, report] = fit(X, Y, eps, a.tol, a.max_iter);
    save_model(a.out, model);
    std::cout << "fit: n=" << X.size() << " m=" << Y.size() << " d=" << X.dim()
              << " eps=" << format_double(eps) << " iters=" << report.iterations
              << " marginal_violation=" << format_double(report.marginal_violation)
              << " dual=" << format_double(report.dual_trace.back())
              << " converged=" << (report.converged ? "yes" : "no") << " -> " << a.out
              << "\n";
    return report.converged ? 0 : 2;
}

// ---------------------------------------------------------------- map

struct MapArgs {
    std::string model, queries, out;
};

int run_map(const MapArgs& a) {
    const EntropicMapModel model = load_model(a.model);
    std::ifstream in(a.queries);
    if (!in) throw parse_error("cannot open " + a.queries);
    const auto rows = read_point_rows(in);
    if (rows.empty()) {
        write_file_atomic(a.out, "");
        std::cout << "map: 0 queries -> " << a.out << "\n";
        return 0;
    }
    const PointCloud queries = PointCloud::from_rows(rows);
    if (queries.dim() != model.targets.dim())
        throw std::invalid_argument("query dimension " + std::to_string(queries.dim()) +
                                    " != model dimension " +
                                    std::to_string(model.targets.dim()));
    const PointCloud mapped = eval_batch(model, queries);
    std::ostringstream body;
    write_cloud_csv(body, mapped);
    write_file_atomic(a.out, body.str());
    std::cout << "map: " << queries.size() << " queries, d=" << queries.dim() << " -> "
              << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    std::string grid, config, out, aggregate;
    std::size_t workers = 1;
};

struct BenchPlan {
    std::vector<std::size_t> ns, ds;
    std::vector<GroundTruth> kinds;
    std::vector<EstimatorKind> estimators;
    ExperimentConfig base;
};

GroundTruth parse_kind(const std::string& s) {
    if (s == "identity") return {MapKind::Identity};
    if (s == "exp") return {MapKind::ExpCoordinatewise};
    if (s == "cubic") return {MapKind::CubicSigned};
    if (s.rfind("affine:", 0) == 0) {
        const auto rest = s.substr(7);
        const auto colon = rest.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("kind '" + s + "': want affine:<scale>:<shift>");
        GroundTruth gt{MapKind::Affine};
        try {
            gt.scale = std::stod(rest.substr(0, colon));
            gt.shift = std::stod(rest.substr(colon + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("kind '" + s + "': want affine:<scale>:<shift>");
        }
        return gt;
    }
    throw std::invalid_argument("unknown map kind '" + s +
                                "' (identity|exp|cubic|affine:<scale>:<shift>)");
}

EstimatorKind parse_estimator(const std::string& s) {
    if (s == "entropic") return EstimatorKind::Entropic;
    if (s == "1nn") return EstimatorKind::OneNN;
    throw std::invalid_argument("unknown estimator '" + s + "' (entropic|1nn)");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

std::size_t parse_size(const std::string& s, const std::string& key) {
    try {
        const long long v = std::stoll(s);
        if (v < 0) throw std::invalid_argument("");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("grid key '" + key + "': bad count '" + s + "'");
    }
}

double parse_real(const std::string& s, const std::string& key) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw std::invalid_argument("grid key '" + key + "': bad number '" + s + "'");
    }
}

// "ns=100,400;ds=2;kinds=exp;estimators=entropic,1nn;repeats=20;seed=0;
//  mc=10000;tol=1e-6;maxiter=10000;alpha=3;c=1;eps=0.5"
// eps (fixed) overrides the alpha/c auto rule.
BenchPlan parse_grid(const std::string& spec) {
    BenchPlan plan;
    plan.ds = {2};
    plan.kinds = {{MapKind::ExpCoordinatewise}};
    plan.estimators = {EstimatorKind::Entropic};
    double alpha = 3.0, c = 1.0, eps = 0.0;

    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("grid item '" + item + "': want key=value");
        const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
        if (key == "ns") {
            plan.ns.clear();
            for (const auto& f : split_list(value)) plan.ns.push_back(parse_size(f, key));
        } else if (key == "ds") {
            plan.ds.clear();
            for (const auto& f : split_list(value)) plan.ds.push_back(parse_size(f, key));
        } else if (key == "kinds") {
            plan.kinds.clear();
            for (const auto& f : split_list(value)) plan.kinds.push_back(parse_kind(f));
        } else if (key == "estimators") {
            plan.estimators.clear();
            for (const auto& f : split_list(value))
                plan.estimators.push_back(parse_estimator(f));
        } else if (key == "repeats") {
            plan.base.repeats = parse_size(value, key);
        } else if (key == "seed") {
            plan.base.seed = static_cast<std::uint64_t>(parse_size(value, key));
        } else if (key == "mc") {
            plan.base.mc_samples = parse_size(value, key);
        } else if (key == "tol") {
            plan.base.tol = parse_real(value, key);
        } else if (key == "maxiter") {
            plan.base.max_iter = parse_size(value, key);
        } else if (key == "alpha") {
            alpha = parse_real(value, key);
        } else if (key == "c") {
            c = parse_real(value, key);
        } else if (key == "eps") {
            eps = parse_real(value, key);
        } else {
            throw std::invalid_argument("grid: unknown key '" + key + "'");
        }
    }
    if (plan.ns.empty()) throw std::invalid_argument("grid: missing required key 'ns'");
    plan.base.eps_rule =
        eps > 0.0 ? EpsRule::fixed(eps) : EpsRule::auto_rule(alpha, c);
    return plan;
}

// JSON twin of the grid string; same keys, lists as arrays.
BenchPlan parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("config: ") + e.what());
    }
    BenchPlan plan;
    plan.ds = {2};
    plan.kinds = {{MapKind::ExpCoordinatewise}};
    plan.estimators = {EstimatorKind::Entropic};
    double alpha = 3.0, c = 1.0, eps = 0.0;
    try {
        if (!j.contains("ns")) throw std::invalid_argument("config: missing key 'ns'");
        plan.ns = j.at("ns").get<std::vector<std::size_t>>();
        if (j.contains("ds")) plan.ds = j.at("ds").get<std::vector<std::size_t>>();
        if (j.contains("kinds")) {
            plan.kinds.clear();
            for (const auto& k : j.at("kinds"))
                plan.kinds.push_back(parse_kind(k.get<std::string>()));
        }
        if (j.contains("estimators")) {
            plan.estimators.clear();
            for (const auto& e : j.at("estimators"))
                plan.estimators.push_back(parse_estimator(e.get<std::string>()));
        }
        if (j.contains("repeats")) plan.base.repeats = j.at("repeats").get<std::size_t>();
        if (j.contains("seed")) plan.base.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("mc")) plan.base.mc_samples = j.at("mc").get<std::size_t>();
        if (j.contains("tol")) plan.base.tol = j.at("tol").get<double>();
        if (j.contains("maxiter")) plan.base.max_iter = j.at("maxiter").get<std::size_t>();
        if (j.contains("alpha")) alpha = j.at("alpha").get<double>();
        if (j.contains("c")) c = j.at("c").get<double>();
        if (j.contains("eps")) eps = j.at("eps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("config: ") + e.what());
    }
    plan.base.eps_rule =
        eps > 0.0 ? EpsRule::fixed(eps) : EpsRule::auto_rule(alpha, c);
    return plan;
}

int run_bench(const BenchArgs& a) {
    if (a.grid.empty() == a.config.empty())
        throw std::invalid_argument("bench: provide exactly one of --grid or --config");
    const BenchPlan plan =
        a.grid.empty() ? parse_config_file(a.config) : parse_grid(a.grid);

    const GridResult res = compare_grid(plan.ns, plan.ds, plan.kinds, plan.estimators,
                                        plan.base, a.workers);

    std::ostringstream csv;
    write_results_csv(csv, res.rows);
    write_file_atomic(a.out, csv.str());

    std::filesystem::path agg_path = a.aggregate;
    if (agg_path.empty()) {
        agg_path = a.out;
        agg_path.replace_extension();
        agg_path += ".agg.json";
    }
    write_file_atomic(agg_path, aggregates_json(res.cells).dump(2) + "\n");

    std::size_t failed = 0;
    for (const auto& r : res.rows)
        if (r.status != "ok") ++failed;
    std::cout << "bench: " << res.cells.size() << " cells, " << res.rows.size()
              << " rows (" << failed << " failed) -> " << a.out << ", " << agg_path.string()
              << "\n";
    return failed == 0 ? 0 : 2;
}

// ------------------------------------------------------------ selfcheck

// Cross-module invariant battery on built-in instances (n <= 200).
int run_selfcheck() {
    struct Outcome {
        std::string name;
        bool ok;
        std::string detail;
    };
    std::vector<Outcome> outcomes;
    const auto check = [&](const std::string& name, auto&& fn) {
        Outcome o{name, false, ""};
        try {
            o.ok = fn(o.detail);
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = e.what();
        }
        outcomes.push_back(std::move(o));
    };

    const PointCloud X40 = sample_uniform_cube(40, 2, 11);
    const PointCloud Y40 = sample_uniform_cube(40, 2, 12);
    const auto [pot40, rep40] = sinkhorn_solve(X40, Y40, 0.2);

    check("duality-gap", [&](std::string& detail) {
        const double dual = dual_objective(pot40, X40, Y40);
        const double primal = primal_objective(pot40, X40, Y40);
        const double gap = std::abs(primal - dual);
        detail = "gap=" + format_double(gap);
        return rep40.converged && gap <= 1e-6 * (1.0 + std::abs(dual));
    });

    check("marginal-feasibility", [&](std::string& detail) {
        const double viol = marginal_violation(pot40, X40, Y40);
        double row_err = 0.0;  // row means of the plan density must be 1 by construction
        for (std::size_t i = 0; i < X40.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < Y40.size(); ++j)
                s += plan_density(pot40, i, j, half_sq_dist(X40.point(i), Y40.point(j)));
            row_err = std::max(row_err, std::abs(s / static_cast<double>(Y40.size()) - 1.0));
        }
        detail = "col=" + format_double(viol) + " row=" + format_double(row_err);
        return viol <= 1e-6 && row_err <= 1e-10;
    });

    check("brenier-identity", [&](std::string& detail) {
        const auto [model, rep] = fit(X40, Y40, 0.5);
        const PointCloud Q = sample_uniform_cube(5, 2, 13);
        double worst = 0.0;
        for (std::size_t i = 0; i < Q.size(); ++i)
            worst = std::max(worst, brenier_residual(model, Q.point(i)));
        detail = "max_residual=" + format_double(worst);
        return rep.converged && worst <= 1e-6;
    });

    check("hungarian-brute-force", [&](std::string& detail) {
        std::mt19937_64 eng(99);
        for (int rep = 0; rep < 5; ++rep) {
            Matrix C(6, 6);
            for (double& v : C.v)
                v = static_cast<double>(eng() >> 11) * 0x1.0p-53;
            const Assignment a = hungarian(C);
            std::vector<std::size_t> perm(6);
            std::iota(perm.begin(), perm.end(), 0);
            double best = std::numeric_limits<double>::infinity();
            do {
                double total = 0.0;
                for (std::size_t i = 0; i < 6; ++i) total += C(i, perm[i]);
                best = std::min(best, total / 6.0);
            } while (std::next_permutation(perm.begin(), perm.end()));
            if (std::abs(a.cost - best) > 1e-12) {
                detail = "mismatch " + format_double(a.cost) + " vs " + format_double(best);
                return false;
            }
        }
        return true;
    });

    check("entropic-lower-bound", [&](std::string& detail) {
        const PointCloud X = sample_uniform_cube(30, 2, 21);
        const PointCloud Y = sample_uniform_cube(30, 2, 22);
        const double w2sq = w2_squared_empirical(X, Y);
        const auto [pot, rep] = sinkhorn_solve(X, Y, 0.3);
        const double sink = dual_objective(pot, X, Y);
        detail = "S_eps=" + format_double(sink) + " halfW2sq=" + format_double(0.5 * w2sq);
        return rep.converged && sink >= 0.5 * w2sq - 1e-9;
    });

    check("epsilon-rule", [&](std::string& detail) {
        const bool exact = epsilon_rule(64, 2, 3.0, 1.0) == 0.5;
        const bool dec = epsilon_rule(1000, 2, 3.0, 1.0) < epsilon_rule(100, 2, 3.0, 1.0);
        detail = "rule(64,2,3,1)=" + format_double(epsilon_rule(64, 2, 3.0, 1.0));
        return exact && dec;
    });

    check("degenerate-limits", [&](std::string& detail) {
        const PointCloud X = sample_uniform_cube(20, 2, 31);
        const PointCloud Y = sample_uniform_cube(20, 2, 32);
        const auto [model, rep] = fit(X, Y, 1e9);
        std::vector<double> mean(2, 0.0);
        for (std::size_t i = 0; i < Y.size(); ++i)
            for (std::size_t j = 0; j < 2; ++j) mean[j] += Y.point(i)[j];
        for (double& v : mean) v /= static_cast<double>(Y.size());
        const auto img = eval(model, X.point(0));
        const double err = std::hypot(img[0] - mean[0], img[1] - mean[1]);
        detail = "blur_err=" + format_double(err);
        return err <= 1e-6;
    });

    bool all = true;
    for (const auto& o : outcomes) {
        std::cout << (o.ok ? "PASS " : "FAIL ") << o.name;
        if (!o.detail.empty()) std::cout << " (" << o.detail << ")";
        std::cout << "\n";
        all = all && o.ok;
    }
    std::cout << (all ? "selfcheck: all checks passed" : "selfcheck: FAILURES above")
              << "\n";
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"entropic optimal transport map estimation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand(
        "fit", "Fit an entropic transport map between two point-cloud CSVs");
    fit_cmd->set_version_flag("--version", kVersion);
    fit_cmd->add_option("--source", fit_args.source, "source point CSV")->required();
    fit_cmd->add_option("--target", fit_args.target, "target point CSV")->required();
    fit_cmd->add_option("--out", fit_args.out, "output model JSON path")->required();
    auto* eps_opt =
        fit_cmd->add_option("--eps", fit_args.eps, "fixed regularization parameter")
            ->check(CLI::PositiveNumber);
    auto* auto_opt = fit_cmd->add_option(
        "--eps-auto", fit_args.eps_auto,
        "auto rule 'alpha_bar[,c]' => eps = c*n^(-1/(d'+alpha_bar+1)); default 3,1");
    eps_opt->excludes(auto_opt);
    auto_opt->excludes(eps_opt);
    fit_cmd->add_option("--tol", fit_args.tol, "marginal violation tolerance")
        ->check(CLI::PositiveNumber);
    fit_cmd->add_option("--max-iter", fit_args.max_iter, "sweep limit");

    MapArgs map_args;
    auto* map_cmd =
        app.add_subcommand("map", "Evaluate a saved model at query points from a CSV");
    map_cmd->set_version_flag("--version", kVersion);
    map_cmd->add_option("--model", map_args.model, "model JSON from fit")->required();
    map_cmd->add_option("--queries", map_args.queries, "query point CSV")->required();
    map_cmd->add_option("--out", map_args.out, "output CSV path")->required();

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand(
        "bench", "Run the synthetic estimator benchmark grid and write CSV + aggregates");
    bench_cmd->set_version_flag("--version", kVersion);
    auto* grid_opt = bench_cmd->add_option(
        "--grid", bench_args.grid,
        "grid spec, e.g. 'ns=100,400;ds=2;kinds=exp;estimators=entropic,1nn;repeats=5'");
    auto* config_opt =
        bench_cmd->add_option("--config", bench_args.config, "grid config JSON file");
    grid_opt->excludes(config_opt);
    config_opt->excludes(grid_opt);
    bench_cmd->add_option("--out", bench_args.out, "results CSV path")->required();
    bench_cmd->add_option("--aggregate", bench_args.aggregate,
                          "aggregate JSON path (default: <out stem>.agg.json)");
    bench_cmd->add_option("--workers", bench_args.workers, "concurrent grid cells")
        ->check(CLI::PositiveNumber);

    auto* selfcheck_cmd =
        app.add_subcommand("selfcheck", "Run the built-in solver invariant battery");
    selfcheck_cmd->set_version_flag("--version", kVersion);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (fit_cmd->parsed()) return run_fit(fit_args);
        if (map_cmd->parsed()) return run_map(map_args);
        if (bench_cmd->parsed()) return run_bench(bench_args);
        if (selfcheck_cmd->parsed()) return run_selfcheck();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

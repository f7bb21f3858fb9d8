#pragma once

// Synthetic experiment harness: P = Unif[-1,1]^d, target Q drawn by pushing
// an independent uniform sample through a coordinate-wise monotone map, both
// estimators fitted and scored by Monte-Carlo MSE on out-of-sample queries.
// Every field of every result row except runtime_ms is a pure function of
// the configuration.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entromap/baseline.hpp"
#include "entromap/core.hpp"
#include "entromap/io.hpp"
#include "entromap/map.hpp"
#include "entromap/sinkhorn.hpp"

namespace entromap {

enum class MapKind { Identity, ExpCoordinatewise, CubicSigned, Affine };

struct GroundTruth {
    MapKind kind = MapKind::Identity;
    double scale = 1.0, shift = 0.0;  // Affine only
};

enum class EstimatorKind { Entropic, OneNN };

struct EpsRule {
    enum class Kind { Auto, Fixed };
    Kind kind = Kind::Auto;
    double alpha_bar = 3.0, c = 1.0;  // Auto
    double value = 0.0;               // Fixed

    static EpsRule auto_rule(double alpha_bar = 3.0, double c = 1.0) {
        EpsRule r;
        r.kind = Kind::Auto;
        r.alpha_bar = alpha_bar;
        r.c = c;
        return r;
    }
    static EpsRule fixed(double value) {
        EpsRule r;
        r.kind = Kind::Fixed;
        r.value = value;
        return r;
    }
};

struct ExperimentConfig {
    std::size_t d = 2;
    std::size_t n = 100;
    GroundTruth map{MapKind::ExpCoordinatewise};
    EstimatorKind estimator = EstimatorKind::Entropic;
    EpsRule eps_rule{};
    std::uint64_t seed = 0;
    std::size_t mc_samples = 10'000;
    double tol = default_tol;
    std::size_t max_iter = default_max_iter;
    std::size_t repeats = 20;
};

struct ExperimentResult {
    std::string estimator;  // "entropic" | "1nn"
    std::size_t d = 0;
    std::size_t n = 0;
    double eps = 0.0;  // 0 for 1nn
    std::size_t repeat = 0;
    double mse = std::numeric_limits<double>::quiet_NaN();
    double runtime_ms = 0.0;  // fit only
    std::size_t iters = 0;    // sinkhorn sweeps, 0 for 1nn
    std::uint64_t seed = 0;   // per-repeat sub-seed
    std::string status = "ok";
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {  // splitmix64 finalizer
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace detail

// n i.i.d. points uniform on [-1,1]^d. The 53-bit mantissa draw is specified
// here rather than delegated to a distribution object so that identical
// (seed, n, d) produce identical clouds on every platform.
inline PointCloud sample_uniform_cube(std::size_t n, std::size_t d, std::uint64_t seed) {
    if (n < 1 || d < 1)
        throw std::invalid_argument("sample_uniform_cube: need n >= 1, d >= 1");
    std::mt19937_64 eng(seed);
    std::vector<double> coords(n * d);
    for (double& c : coords) {
        const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;  // [0,1)
        c = 2.0 * u - 1.0;
    }
    return PointCloud(n, d, std::move(coords));
}

inline const char* map_kind_label(const GroundTruth& gt) {
    switch (gt.kind) {
        case MapKind::Identity: return "identity";
        case MapKind::ExpCoordinatewise: return "exp";
        case MapKind::CubicSigned: return "cubic";
        case MapKind::Affine: return "affine";
    }
    throw std::invalid_argument("map_kind_label: unknown kind");
}

inline std::vector<double> ground_truth_map(const GroundTruth& gt,
                                            std::span<const double> x) {
    std::vector<double> out(x.size());
    switch (gt.kind) {
        case MapKind::Identity:
            out.assign(x.begin(), x.end());
            break;
        case MapKind::ExpCoordinatewise:
            for (std::size_t j = 0; j < x.size(); ++j) out[j] = std::exp(x[j]);
            break;
        case MapKind::CubicSigned:
            // 3 x² sign(x) = 3 x |x|
            for (std::size_t j = 0; j < x.size(); ++j) out[j] = 3.0 * x[j] * std::abs(x[j]);
            break;
        case MapKind::Affine:
            for (std::size_t j = 0; j < x.size(); ++j) out[j] = gt.scale * x[j] + gt.shift;
            break;
        default:
            throw std::invalid_argument("ground_truth_map: unknown kind");
    }
    return out;
}

inline PointCloud make_target(const PointCloud& X, const GroundTruth& gt) {
    std::vector<double> coords;
    coords.reserve(X.size() * X.dim());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const auto img = ground_truth_map(gt, X.point(i));
        coords.insert(coords.end(), img.begin(), img.end());
    }
    return PointCloud(X.size(), X.dim(), std::move(coords));
}

// eps = c · n^{-1/(d' + alpha_bar + 1)} with d' = 2⌈d/2⌉. Computed through
// exp2/log2 so that power-of-two n with integral exponents stays exact.
inline double epsilon_rule(std::size_t n, std::size_t d, double alpha_bar, double c) {
    if (n < 2) throw std::invalid_argument("epsilon_rule: n must be >= 2");
    if (d < 1) throw std::invalid_argument("epsilon_rule: d must be >= 1");
    if (!(alpha_bar > 1.0 && alpha_bar <= 3.0))
        throw std::invalid_argument("epsilon_rule: alpha_bar must lie in (1, 3]");
    if (!(c > 0.0)) throw std::invalid_argument("epsilon_rule: c must be > 0");
    const double dprime = static_cast<double>(d % 2 == 0 ? d : d + 1);
    const double k = dprime + alpha_bar + 1.0;
    return c * std::exp2(-std::log2(static_cast<double>(n)) / k);
}

// (1/m) Σ ‖estimate(x) − truth(x)‖² over m seeded uniform draws on [-1,1]^d
template <class Est, class Truth>
double mse_monte_carlo(Est&& estimate, Truth&& truth, std::size_t d, std::size_t m,
                       std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("mse_monte_carlo: m must be >= 1");
    const PointCloud queries = sample_uniform_cube(m, d, seed);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto q = queries.point(i);
        const std::vector<double> a = estimate(q);
        const std::vector<double> b = truth(q);
        for (std::size_t j = 0; j < d; ++j) {
            const double t = a[j] - b[j];
            acc += t * t;
        }
    }
    return acc / static_cast<double>(m);
}

inline void validate(const ExperimentConfig& cfg) {
    if (cfg.n < 2) throw std::invalid_argument("config: n must be >= 2");
    if (cfg.d < 1) throw std::invalid_argument("config: d must be >= 1");
    if (cfg.mc_samples < 1) throw std::invalid_argument("config: mc_samples must be >= 1");
    if (cfg.repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
    if (!(cfg.tol > 0.0)) throw std::invalid_argument("config: tol must be > 0");
    if (cfg.max_iter < 1) throw std::invalid_argument("config: max_iter must be >= 1");
    if (cfg.map.kind == MapKind::Affine && !(cfg.map.scale > 0.0))
        throw std::invalid_argument("config: affine scale must be > 0");
    if (cfg.eps_rule.kind == EpsRule::Kind::Auto) {
        if (!(cfg.eps_rule.alpha_bar > 1.0 && cfg.eps_rule.alpha_bar <= 3.0))
            throw std::invalid_argument("config: alpha_bar must lie in (1, 3]");
        if (!(cfg.eps_rule.c > 0.0)) throw std::invalid_argument("config: c must be > 0");
    } else if (!(cfg.eps_rule.value > 0.0)) {
        throw std::invalid_argument("config: fixed eps must be > 0");
    }
}

inline double resolve_eps(const ExperimentConfig& cfg) {
    return cfg.eps_rule.kind == EpsRule::Kind::Fixed
               ? cfg.eps_rule.value
               : epsilon_rule(cfg.n, cfg.d, cfg.eps_rule.alpha_bar, cfg.eps_rule.c);
}

inline const char* estimator_label(EstimatorKind e) {
    return e == EstimatorKind::Entropic ? "entropic" : "1nn";
}

namespace detail {

inline std::string csv_safe(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

}  // namespace detail

// One row per repeat. Per-repeat failures are recorded in the status column,
// never thrown: a long grid must survive a single diverging cell.
inline std::vector<ExperimentResult> run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    using clock = std::chrono::steady_clock;
    std::vector<ExperimentResult> out;
    out.reserve(cfg.repeats);
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t sub = cfg.seed ^ static_cast<std::uint64_t>(r);
        const std::uint64_t stream = detail::mix64(sub);
        const std::uint64_t xseed = detail::mix64(stream + 1);
        const std::uint64_t yseed = detail::mix64(stream + 2);
        const std::uint64_t eseed = detail::mix64(stream + 3);

        ExperimentResult row;
        row.estimator = estimator_label(cfg.estimator);
        row.d = cfg.d;
        row.n = cfg.n;
        row.repeat = r;
        row.seed = sub;
        const auto truth = [&](std::span<const double> q) {
            return ground_truth_map(cfg.map, q);
        };
        try {
            const PointCloud X = sample_uniform_cube(cfg.n, cfg.d, xseed);
            const PointCloud Y = make_target(sample_uniform_cube(cfg.n, cfg.d, yseed), cfg.map);
            if (cfg.estimator == EstimatorKind::Entropic) {
                const double eps = resolve_eps(cfg);
                row.eps = eps;
                const auto t0 = clock::now();
                const auto [model, report] = fit(X, Y, eps, cfg.tol, cfg.max_iter);
                const auto t1 = clock::now();
                row.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                row.iters = report.iterations;
                row.mse = mse_monte_carlo(
                    [&](std::span<const double> q) { return eval(model, q); }, truth,
                    cfg.d, cfg.mc_samples, eseed);
            } else {
                const auto t0 = clock::now();
                const OneNNModel model = one_nn_fit(X, Y);
                const auto t1 = clock::now();
                row.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                row.mse = mse_monte_carlo(
                    [&](std::span<const double> q) { return one_nn_eval(model, q); }, truth,
                    cfg.d, cfg.mc_samples, eseed);
            }
        } catch (const std::exception& e) {
            row.mse = std::numeric_limits<double>::quiet_NaN();
            row.runtime_ms = 0.0;
            row.status = detail::csv_safe(std::string("failed: ") + e.what());
        }
        out.push_back(std::move(row));
    }
    return out;
}

struct CellAggregate {
    std::string estimator;
    std::string kind;
    std::size_t d = 0;
    std::size_t n = 0;
    double eps = 0.0;
    std::size_t repeats = 0;
    std::size_t failed = 0;
    double mean_mse = 0.0, std_mse = 0.0;
    double mean_runtime_ms = 0.0, std_runtime_ms = 0.0;
};

struct GridResult {
    std::vector<ExperimentResult> rows;
    std::vector<CellAggregate> cells;
};

namespace detail {

inline CellAggregate aggregate_cell(const ExperimentConfig& cfg,
                                    const std::vector<ExperimentResult>& rows) {
    CellAggregate cell;
    cell.estimator = estimator_label(cfg.estimator);
    cell.kind = map_kind_label(cfg.map);
    cell.d = cfg.d;
    cell.n = cfg.n;
    cell.repeats = rows.size();
    std::vector<double> mses, times;
    for (const auto& r : rows) {
        if (r.status != "ok") {
            ++cell.failed;
            continue;
        }
        cell.eps = r.eps;
        mses.push_back(r.mse);
        times.push_back(r.runtime_ms);
    }
    const auto mean_of = [](const std::vector<double>& v) {
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const auto std_of = [&](const std::vector<double>& v, double mean) {
        if (v.size() < 2) return 0.0;
        double s = 0.0;
        for (double x : v) s += (x - mean) * (x - mean);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    cell.mean_mse = mean_of(mses);
    cell.std_mse = std_of(mses, cell.mean_mse);
    cell.mean_runtime_ms = mean_of(times);
    cell.std_runtime_ms = std_of(times, cell.mean_runtime_ms);
    return cell;
}

}  // namespace detail

// Cartesian sweep over estimators × kinds × ds × ns; cells run concurrently
// on up to `workers` threads, results are collected per cell slot and sorted
// afterwards, so the output is independent of scheduling.
inline GridResult compare_grid(const std::vector<std::size_t>& ns,
                               const std::vector<std::size_t>& ds,
                               const std::vector<GroundTruth>& kinds,
                               const std::vector<EstimatorKind>& estimators,
                               const ExperimentConfig& base, std::size_t workers = 1) {
    if (ns.empty() || ds.empty() || kinds.empty() || estimators.empty())
        throw std::invalid_argument("compare_grid: empty axis");
    std::vector<ExperimentConfig> cells;
    for (const auto est : estimators)
        for (const auto& kind : kinds)
            for (const auto d : ds)
                for (const auto n : ns) {
                    ExperimentConfig cfg = base;
                    cfg.estimator = est;
                    cfg.map = kind;
                    cfg.d = d;
                    cfg.n = n;
                    validate(cfg);
                    cells.push_back(cfg);
                }

    std::vector<std::vector<ExperimentResult>> per_cell(cells.size());
    std::atomic<std::size_t> next{0};
    const auto drain = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            per_cell[i] = run_experiment(cells[i]);
        }
    };
    const std::size_t nthreads = std::min(std::max<std::size_t>(workers, 1), cells.size());
    if (nthreads <= 1) {
        drain();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(drain);
        for (auto& t : pool) t.join();
    }

    GridResult out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out.cells.push_back(detail::aggregate_cell(cells[i], per_cell[i]));
        for (auto& row : per_cell[i]) out.rows.push_back(std::move(row));
    }
    const auto row_key_less = [](const ExperimentResult& a, const ExperimentResult& b) {
        if (a.estimator != b.estimator) return a.estimator < b.estimator;
        if (a.d != b.d) return a.d < b.d;
        return a.n < b.n;
    };
    std::stable_sort(out.rows.begin(), out.rows.end(), row_key_less);
    const auto cell_key_less = [](const CellAggregate& a, const CellAggregate& b) {
        if (a.estimator != b.estimator) return a.estimator < b.estimator;
        if (a.d != b.d) return a.d < b.d;
        return a.n < b.n;
    };
    std::stable_sort(out.cells.begin(), out.cells.end(), cell_key_less);
    return out;
}

inline void write_results_csv(std::ostream& out, const std::vector<ExperimentResult>& rows) {
    out << "estimator,d,n,eps,repeat,mse,runtime_ms,iters,seed,status\n";
    for (const auto& r : rows) {
        out << r.estimator << ',' << r.d << ',' << r.n << ',' << format_double(r.eps)
            << ',' << r.repeat << ',' << format_double(r.mse) << ','
            << format_double(r.runtime_ms) << ',' << r.iters << ',' << r.seed << ','
            << r.status << '\n';
    }
}

inline nlohmann::json aggregates_json(const std::vector<CellAggregate>& cells) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cells) {
        arr.push_back({{"estimator", c.estimator},
                       {"kind", c.kind},
                       {"d", c.d},
                       {"n", c.n},
                       {"eps", c.eps},
                       {"repeats", c.repeats},
                       {"failed", c.failed},
                       {"mean_mse", c.mean_mse},
                       {"std_mse", c.std_mse},
                       {"mean_runtime_ms", c.mean_runtime_ms},
                       {"std_runtime_ms", c.std_runtime_ms}});
    }
    return arr;
}

}  // namespace entromap

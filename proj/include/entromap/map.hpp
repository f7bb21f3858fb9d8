#pragma once

// The entropic map: barycentric projection of the plan, extended to
// arbitrary query points through the g-side potential,
//   T(x)   = sum_i w_i(x) Y_i,  w_i(x) ∝ exp((g_i - ½‖x - Y_i‖²)/eps)
//   f(x)   = -eps log (1/m) sum_i exp((g_i - ½‖x - Y_i‖²)/eps)
// and the diagnostic residual of the identity T = Id - ∇f.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entromap/core.hpp"
#include "entromap/errors.hpp"
#include "entromap/io.hpp"
#include "entromap/parallel.hpp"
#include "entromap/sinkhorn.hpp"

namespace entromap {

struct EntropicMapModel {
    PointCloud targets;
    std::vector<double> gvals;  // g at each target
    double eps;

    EntropicMapModel(PointCloud targets_, std::vector<double> gvals_, double eps_)
        : targets(std::move(targets_)), gvals(std::move(gvals_)), eps(eps_) {
        if (gvals.size() != targets.size())
            throw std::invalid_argument("EntropicMapModel: gvals length != target count");
        if (!(eps > 0.0)) throw std::invalid_argument("EntropicMapModel: eps must be > 0");
        for (double v : gvals)
            if (!std::isfinite(v))
                throw std::invalid_argument("EntropicMapModel: non-finite g value");
    }
};

inline std::pair<EntropicMapModel, SolveReport> fit(const PointCloud& X,
                                                    const PointCloud& Y, double eps,
                                                    double tol = default_tol,
                                                    std::size_t max_iter = default_max_iter) {
    auto [pot, report] = sinkhorn_solve(X, Y, eps, tol, max_iter);
    return {EntropicMapModel(Y, std::move(pot.g), eps), std::move(report)};
}

namespace detail {

// softmax-weighted target average written into out[0..d)
inline void eval_into(const EntropicMapModel& model, std::span<const double> x,
                      double* out) {
    const std::size_t m = model.targets.size(), d = model.targets.dim();
    if (x.size() != d)
        throw std::invalid_argument("eval: query dimension mismatch");
    const double inv_eps = 1.0 / model.eps;
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double l = (model.gvals[i] - half_sq_dist(x, model.targets.point(i))) * inv_eps;
        logits[i] = l;
        if (l > mx) mx = l;
    }
    if (!std::isfinite(mx))
        throw numerical_error("eval: non-finite logits", 0);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double w = std::exp(logits[i] - mx);
        s += w;
        const auto yi = model.targets.point(i);
        for (std::size_t j = 0; j < d; ++j) out[j] += w * yi[j];
    }
    for (std::size_t j = 0; j < d; ++j) out[j] /= s;
}

}  // namespace detail

inline std::vector<double> eval(const EntropicMapModel& model, std::span<const double> x) {
    std::vector<double> out(model.targets.dim());
    detail::eval_into(model, x, out.data());
    return out;
}

inline PointCloud eval_batch(const EntropicMapModel& model, const PointCloud& queries) {
    if (queries.dim() != model.targets.dim())
        throw std::invalid_argument("eval_batch: query dimension mismatch");
    const std::size_t nq = queries.size(), d = queries.dim();
    std::vector<double> out(nq * d);
    parallel_blocks(nq, [&](std::size_t b) {
        const std::size_t i0 = b * parallel_block;
        const std::size_t i1 = std::min(nq, i0 + parallel_block);
        for (std::size_t i = i0; i < i1; ++i)
            detail::eval_into(model, queries.point(i), out.data() + i * d);
    });
    return PointCloud(nq, d, std::move(out));
}

inline double f_potential(const EntropicMapModel& model, std::span<const double> x) {
    const std::size_t m = model.targets.size();
    if (x.size() != model.targets.dim())
        throw std::invalid_argument("f_potential: query dimension mismatch");
    const double inv_eps = 1.0 / model.eps;
    std::vector<double> logits(m);
    for (std::size_t i = 0; i < m; ++i)
        logits[i] = (model.gvals[i] - half_sq_dist(x, model.targets.point(i))) * inv_eps;
    return -model.eps * log_mean_exp(logits);
}

// ‖T(x) - (x - ∇f(x))‖ with a central-difference gradient; small values
// certify the identity T = Id - ∇f.
inline double brenier_residual(const EntropicMapModel& model, std::span<const double> x,
                               double h) {
    if (!(h > 0.0)) throw std::invalid_argument("brenier_residual: h must be > 0");
    const std::size_t d = model.targets.dim();
    const std::vector<double> mapped = eval(model, x);
    std::vector<double> probe(x.begin(), x.end());
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double xk = probe[k];
        probe[k] = xk + h;
        const double up = f_potential(model, probe);
        probe[k] = xk - h;
        const double dn = f_potential(model, probe);
        probe[k] = xk;
        const double grad_k = (up - dn) / (2.0 * h);
        const double diff = mapped[k] - (xk - grad_k);
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

inline double brenier_residual(const EntropicMapModel& model, std::span<const double> x) {
    double norm2 = 0.0;
    for (double v : x) norm2 += v * v;
    return brenier_residual(model, x, 1e-5 * (1.0 + std::sqrt(norm2)));
}

// {"eps": number, "d": int, "targets": [[...]], "g": [...]}
inline nlohmann::json model_to_json(const EntropicMapModel& model) {
    nlohmann::json targets = nlohmann::json::array();
    for (std::size_t i = 0; i < model.targets.size(); ++i) {
        const auto p = model.targets.point(i);
        targets.push_back(std::vector<double>(p.begin(), p.end()));
    }
    return {{"eps", model.eps},
            {"d", model.targets.dim()},
            {"targets", std::move(targets)},
            {"g", model.gvals}};
}

inline EntropicMapModel model_from_json(const nlohmann::json& j) {
    try {
        const double eps = j.at("eps").get<double>();
        const std::size_t d = j.at("d").get<std::size_t>();
        const auto& targets = j.at("targets");
        if (!targets.is_array() || targets.empty())
            throw parse_error("model: targets must be a nonempty array");
        std::vector<double> flat;
        flat.reserve(targets.size() * d);
        for (const auto& row : targets) {
            if (!row.is_array() || row.size() != d)
                throw parse_error("model: target row length != d");
            for (const auto& v : row) flat.push_back(v.get<double>());
        }
        PointCloud cloud(targets.size(), d, std::move(flat));
        auto gvals = j.at("g").get<std::vector<double>>();
        return EntropicMapModel(std::move(cloud), std::move(gvals), eps);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("model: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw parse_error(std::string("model: ") + e.what());
    }
}

inline void save_model(const std::filesystem::path& path, const EntropicMapModel& model) {
    write_file_atomic(path, model_to_json(model).dump(2) + "\n");
}

inline EntropicMapModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("model: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace entromap

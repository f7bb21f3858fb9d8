#pragma once

// Log-domain Sinkhorn between two uniform empirical measures.
//
// Updates (one full sweep, g first, f last so the source marginal is exact):
//   g_j = -eps * log (1/n) sum_i exp((f_i - C_ij)/eps)
//   f_i = -eps * log (1/m) sum_j exp((g_j - C_ij)/eps)
// with C_ij = half_sq_dist(X_i, Y_j) and f started at 0. The plan density is
// plan_ij = exp((f_i + g_j - C_ij)/eps); the stopping metric is the TV
// distance between the plan's column marginal and uniform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "entromap/core.hpp"
#include "entromap/errors.hpp"
#include "entromap/parallel.hpp"

namespace entromap {

struct DualPotentials {
    std::vector<double> f;  // source side, length n
    std::vector<double> g;  // target side, length m
    double eps = 1.0;
};

struct SolveReport {
    std::size_t iterations = 0;          // full sweeps performed
    double marginal_violation = std::numeric_limits<double>::infinity();
    std::vector<double> dual_trace;      // dual objective after each sweep
    bool converged = false;
};

inline constexpr double default_tol = 1e-6;
inline constexpr std::size_t default_max_iter = 10'000;

namespace detail {

inline void check_pair_shapes(const DualPotentials& pot, const PointCloud& X,
                              const PointCloud& Y) {
    if (X.dim() != Y.dim())
        throw std::invalid_argument("potentials: cloud dimension mismatch");
    if (pot.f.size() != X.size() || pot.g.size() != Y.size())
        throw std::invalid_argument("potentials: length mismatch with clouds");
}

inline double max_abs(const std::vector<double>& v) {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, std::abs(x));
    return mx;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace detail

inline std::pair<DualPotentials, SolveReport> sinkhorn_solve(
    const PointCloud& X, const PointCloud& Y, double eps,
    double tol = default_tol, std::size_t max_iter = default_max_iter,
    std::size_t cost_cap = default_cost_cap) {
    if (X.dim() != Y.dim())
        throw std::invalid_argument("sinkhorn_solve: dimension mismatch");
    if (!(eps > 0.0)) throw std::invalid_argument("sinkhorn_solve: eps must be > 0");
    if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn_solve: tol must be > 0");
    if (max_iter < 1) throw std::invalid_argument("sinkhorn_solve: max_iter must be >= 1");

    const std::size_t n = X.size(), m = Y.size();
    const double inv_eps = 1.0 / eps;
    const double logn = std::log(static_cast<double>(n));
    const double logm = std::log(static_cast<double>(m));
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();

    // Materialize the cost table when it fits the cap, otherwise recompute
    // rows on the fly each pass.
    const bool materialized = X.size() <= cost_cap / Y.size();
    Matrix C;
    double max_cost = 0.0;
    bool max_cost_known = false;
    if (materialized) {
        C = cost_matrix(X, Y, cost_cap);
        for (double c : C.v) max_cost = std::max(max_cost, c);
        max_cost_known = true;
    }

    std::vector<double> f(n, 0.0), g(m, 0.0);
    const std::size_t rblocks = (n + parallel_block - 1) / parallel_block;
    const std::size_t cblocks = (m + parallel_block - 1) / parallel_block;
    std::vector<double> gmx(m), gsm(m);          // per-column running log-mean-exp
    std::vector<double> partials(rblocks * m);   // per-row-block plan column sums
    std::vector<double> cmax_partial(cblocks, 0.0);

    SolveReport report;
    double dual = neg_inf;

    // one column block of the g-update; running-rescale log-mean-exp keeps a
    // single pass over the (row-major) cost entries
    const auto g_block = [&](std::size_t b) {
        const std::size_t j0 = b * parallel_block;
        const std::size_t j1 = std::min(m, j0 + parallel_block);
        const std::size_t w = j1 - j0;
        double* mx = gmx.data() + j0;
        double* sm = gsm.data() + j0;
        for (std::size_t j = 0; j < w; ++j) {
            mx[j] = neg_inf;
            sm[j] = 0.0;
        }
        std::vector<double> crow;
        if (!materialized) crow.resize(w);
        const bool track_cmax = !max_cost_known;
        double cmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* cr;
            if (materialized) {
                cr = C.row(i) + j0;
            } else {
                const auto xi = X.point(i);
                for (std::size_t j = 0; j < w; ++j)
                    crow[j] = half_sq_dist(xi, Y.point(j0 + j));
                cr = crow.data();
            }
            if (track_cmax)
                for (std::size_t j = 0; j < w; ++j) cmax = std::max(cmax, cr[j]);
            const double fi = f[i];
            for (std::size_t j = 0; j < w; ++j) {
                const double a = (fi - cr[j]) * inv_eps;
                if (a <= mx[j]) {
                    sm[j] += std::exp(a - mx[j]);
                } else {
                    sm[j] = sm[j] * std::exp(mx[j] - a) + 1.0;
                    mx[j] = a;
                }
            }
        }
        for (std::size_t j = 0; j < w; ++j)
            g[j0 + j] = -eps * (mx[j] + std::log(sm[j]) - logn);
        if (track_cmax) cmax_partial[b] = cmax;
    };

    // one row block of the f-update; also accumulates this block's partial
    // plan column sums, reusing the exponentials from the log-mean-exp pass
    const auto f_block = [&](bool with_colsums) {
        return [&, with_colsums](std::size_t b) {
            const std::size_t i0 = b * parallel_block;
            const std::size_t i1 = std::min(n, i0 + parallel_block);
            double* part = partials.data() + b * m;
            if (with_colsums) std::fill(part, part + m, 0.0);
            std::vector<double> a(m);
            std::vector<double> crow;
            if (!materialized) crow.resize(m);
            for (std::size_t i = i0; i < i1; ++i) {
                const double* cr;
                if (materialized) {
                    cr = C.row(i);
                } else {
                    const auto xi = X.point(i);
                    for (std::size_t j = 0; j < m; ++j)
                        crow[j] = half_sq_dist(xi, Y.point(j));
                    cr = crow.data();
                }
                double mx = neg_inf;
                for (std::size_t j = 0; j < m; ++j) {
                    const double t = (g[j] - cr[j]) * inv_eps;
                    a[j] = t;
                    if (t > mx) mx = t;
                }
                double s = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    const double e = std::exp(a[j] - mx);
                    a[j] = e;
                    s += e;
                }
                f[i] = -eps * (mx + std::log(s) - logm);
                if (with_colsums) {
                    // plan_ij = m * e_ij / s once f_i is in place
                    const double scale = static_cast<double>(m) / s;
                    for (std::size_t j = 0; j < m; ++j) part[j] += a[j] * scale;
                }
            }
        };
    };

    std::size_t sweep = 0;
    while (sweep < max_iter) {
        ++sweep;
        ThreadPool::shared().for_each_block(cblocks, g_block);
        if (!max_cost_known) {
            for (double c : cmax_partial) max_cost = std::max(max_cost, c);
            max_cost_known = true;
        }
        ThreadPool::shared().for_each_block(rblocks, f_block(true));

        // fold block partials in block order: deterministic at any thread count
        double viol_acc = 0.0, colmean_total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t b = 0; b < rblocks; ++b) s += partials[b * m + j];
            const double colmean = s / static_cast<double>(n);
            viol_acc += std::abs(colmean - 1.0);
            colmean_total += colmean;
        }
        const double viol = 0.5 * viol_acc / static_cast<double>(m);

        double fsum = 0.0, gsum = 0.0;
        for (double v : f) fsum += v;
        for (double v : g) gsum += v;
        dual = fsum / static_cast<double>(n) + gsum / static_cast<double>(m) -
               eps * (colmean_total / static_cast<double>(m)) + eps;

        if (!std::isfinite(viol) || !std::isfinite(dual) || !detail::all_finite(f) ||
            !detail::all_finite(g))
            throw numerical_error("sinkhorn_solve: non-finite potential at sweep " +
                                      std::to_string(sweep),
                                  sweep);
        const double bound = 1e6 * (1.0 + max_cost);
        if (detail::max_abs(f) > bound || detail::max_abs(g) > bound)
            throw numerical_error("sinkhorn_solve: potentials diverged at sweep " +
                                      std::to_string(sweep),
                                  sweep);

        report.dual_trace.push_back(dual);
        report.marginal_violation = viol;
        if (viol <= tol) {
            report.converged = true;
            break;
        }
    }
    report.iterations = sweep;

    // canonical gauge: shift (f, g) by (-mean f, +mean f). Implemented as a
    // g-shift plus one more f-update, which keeps the source marginal exact.
    double fsum = 0.0;
    for (double v : f) fsum += v;
    const double fmean = fsum / static_cast<double>(n);
    for (double& v : g) v += fmean;
    ThreadPool::shared().for_each_block(rblocks, f_block(false));

    DualPotentials pot;
    pot.f = std::move(f);
    pot.g = std::move(g);
    pot.eps = eps;
    return {std::move(pot), std::move(report)};
}

// exp((f_i + g_j - C_ij)/eps)
inline double plan_density(const DualPotentials& pot, std::size_t i, std::size_t j,
                           double c_ij) {
    if (i >= pot.f.size()) throw std::out_of_range("plan_density: row index");
    if (j >= pot.g.size()) throw std::out_of_range("plan_density: column index");
    return std::exp((pot.f[i] + pot.g[j] - c_ij) / pot.eps);
}

// mean f + mean g - eps * meanmean exp((f_i + g_j - C_ij)/eps) + eps.
// The double sum is reduced through nested log-sum-exp so arbitrary
// (unoptimized) potentials cannot overflow.
inline double dual_objective(const DualPotentials& pot, const PointCloud& X,
                             const PointCloud& Y) {
    detail::check_pair_shapes(pot, X, Y);
    const std::size_t n = X.size(), m = Y.size();
    const double inv_eps = 1.0 / pot.eps;
    std::vector<double> row(m), row_lse(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = X.point(i);
        for (std::size_t j = 0; j < m; ++j)
            row[j] = (pot.f[i] + pot.g[j] - half_sq_dist(xi, Y.point(j))) * inv_eps;
        row_lse[i] = log_sum_exp(row);
    }
    const double total = log_sum_exp(row_lse);
    const double meanmean = std::exp(total - std::log(static_cast<double>(n)) -
                                     std::log(static_cast<double>(m)));
    double fsum = 0.0, gsum = 0.0;
    for (double v : pot.f) fsum += v;
    for (double v : pot.g) gsum += v;
    return fsum / static_cast<double>(n) + gsum / static_cast<double>(m) -
           pot.eps * meanmean + pot.eps;
}

// TV distance between the plan's column marginal and uniform:
// (1/2) (1/m) sum_j |(1/n) sum_i plan_ij - 1|
inline double marginal_violation(const DualPotentials& pot, const PointCloud& X,
                                 const PointCloud& Y) {
    detail::check_pair_shapes(pot, X, Y);
    const std::size_t n = X.size(), m = Y.size();
    const double inv_eps = 1.0 / pot.eps;
    std::vector<double> colsum(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = X.point(i);
        for (std::size_t j = 0; j < m; ++j)
            colsum[j] +=
                std::exp((pot.f[i] + pot.g[j] - half_sq_dist(xi, Y.point(j))) * inv_eps);
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        acc += std::abs(colsum[j] / static_cast<double>(n) - 1.0);
    return 0.5 * acc / static_cast<double>(m);
}

// <C, pi> + eps * sum_ij pi_ij log plan_ij with pi_ij = plan_ij/(n*m).
// Only meaningful near feasibility, hence the violation precondition.
inline double primal_objective(const DualPotentials& pot, const PointCloud& X,
                               const PointCloud& Y) {
    detail::check_pair_shapes(pot, X, Y);
    const double viol = marginal_violation(pot, X, Y);
    if (!(viol <= 1e-3))
        throw invalid_state("primal_objective: plan marginal violation " +
                            std::to_string(viol) + " exceeds 1e-3");
    const std::size_t n = X.size(), m = Y.size();
    const double inv_eps = 1.0 / pot.eps;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = X.point(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double c = half_sq_dist(xi, Y.point(j));
            const double t = (pot.f[i] + pot.g[j] - c) * inv_eps;  // log plan_ij
            const double dens = std::exp(t);
            acc += dens * c + pot.eps * dens * t;
        }
    }
    return acc / (static_cast<double>(n) * static_cast<double>(m));
}

}  // namespace entromap

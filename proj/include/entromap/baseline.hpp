#pragma once

// Exact empirical OT via linear assignment, plus the 1-NN map estimator
// built on the optimal permutation: T(x) = Y_{sigma(nearest source index)}.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "entromap/core.hpp"

namespace entromap {

struct Assignment {
    std::vector<std::size_t> sigma;  // sigma[i] = column matched to row i
    double cost = 0.0;               // mean over i of C(i, sigma[i])
};

// Minimum-cost perfect matching, shortest augmenting paths with potentials,
// O(n^3). Internals are 1-indexed with column 0 as the augmenting root.
inline Assignment hungarian(const Matrix& C) {
    if (C.rows != C.cols || C.rows == 0)
        throw std::invalid_argument("hungarian: matrix must be square and nonempty");
    for (double c : C.v)
        if (!std::isfinite(c)) throw std::invalid_argument("hungarian: non-finite cost");

    const std::size_t n = C.rows;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            std::size_t j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = C(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {  // unroll the augmenting path
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Assignment out;
    out.sigma.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) out.sigma[p[j] - 1] = j - 1;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += C(i, out.sigma[i]);
    out.cost = total / static_cast<double>(n);
    return out;
}

// W2²(P_n, Q_n) = (1/n) Σ ‖X_i − Y_{σ(i)}‖² at the optimal σ
inline double w2_squared_empirical(const PointCloud& X, const PointCloud& Y) {
    if (X.size() != Y.size())
        throw std::invalid_argument("w2_squared_empirical: size mismatch");
    if (X.dim() != Y.dim())
        throw std::invalid_argument("w2_squared_empirical: dimension mismatch");
    return 2.0 * hungarian(cost_matrix(X, Y)).cost;
}

struct OneNNModel {
    PointCloud sources;
    PointCloud targets;
    std::vector<std::size_t> sigma;
};

inline OneNNModel one_nn_fit(const PointCloud& X, const PointCloud& Y) {
    if (X.size() != Y.size()) throw std::invalid_argument("one_nn_fit: size mismatch");
    if (X.dim() != Y.dim())
        throw std::invalid_argument("one_nn_fit: dimension mismatch");
    auto assignment = hungarian(cost_matrix(X, Y));
    return OneNNModel{X, Y, std::move(assignment.sigma)};
}

// exhaustive scan; ties go to the lowest source index
inline std::vector<double> one_nn_eval(const OneNNModel& model, std::span<const double> x) {
    if (x.size() != model.sources.dim())
        throw std::invalid_argument("one_nn_eval: query dimension mismatch");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < model.sources.size(); ++i) {
        const double d = half_sq_dist(x, model.sources.point(i));
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    const auto y = model.targets.point(model.sigma[best]);
    return std::vector<double>(y.begin(), y.end());
}

}  // namespace entromap

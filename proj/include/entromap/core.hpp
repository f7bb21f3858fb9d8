#pragma once

// Geometry primitives and stable reductions shared by every solver:
// point clouds with uniform weights, half-squared-Euclidean costs, and
// the log-sum-exp kernel all log-domain computations are built on.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "entromap/errors.hpp"

namespace entromap {

// n points in R^d, row-major, 64-bit floats throughout. Immutable after
// construction; every coordinate is checked finite (a NaN that slips into a
// solver silently poisons the whole run).
class PointCloud {
public:
    PointCloud(std::size_t n, std::size_t d, std::vector<double> coords)
        : n_(n), d_(d), data_(std::move(coords)) {
        if (n_ < 1 || d_ < 1)
            throw std::invalid_argument("PointCloud: need n >= 1 and d >= 1");
        if (data_.size() != n_ * d_)
            throw std::invalid_argument("PointCloud: coordinate count " +
                                        std::to_string(data_.size()) + " != n*d");
        for (double v : data_)
            if (!std::isfinite(v))
                throw std::invalid_argument("PointCloud: non-finite coordinate");
    }

    static PointCloud from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw std::invalid_argument("PointCloud: no rows");
        const std::size_t d = rows.front().size();
        std::vector<double> flat;
        flat.reserve(rows.size() * d);
        for (const auto& r : rows) {
            if (r.size() != d)
                throw std::invalid_argument("PointCloud: ragged rows");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return PointCloud(rows.size(), d, std::move(flat));
    }

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }

    std::span<const double> point(std::size_t i) const {
        if (i >= n_) throw std::out_of_range("PointCloud::point: index");
        return {data_.data() + i * d_, d_};
    }

    const std::vector<double>& data() const { return data_; }

private:
    std::size_t n_, d_;
    std::vector<double> data_;
};

// cost ½‖x − y‖²
inline double half_sq_dist(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("half_sq_dist: dimension mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double t = x[j] - y[j];
        acc += t * t;
    }
    return 0.5 * acc;
}

// Dense row-major matrix, just enough for cost tables and assignment input.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
    const double* row(std::size_t i) const { return v.data() + i * cols; }
    double* row(std::size_t i) { return v.data() + i * cols; }
};

// Beyond this many entries a cost matrix is not materialized; solvers
// recompute rows on the fly instead (see sinkhorn_solve).
inline constexpr std::size_t default_cost_cap = 100'000'000;

// C(i,j) = half_sq_dist(X_i, Y_j)
inline Matrix cost_matrix(const PointCloud& X, const PointCloud& Y,
                          std::size_t cap = default_cost_cap) {
    if (X.dim() != Y.dim())
        throw std::invalid_argument("cost_matrix: dimension mismatch");
    if (X.size() > cap / Y.size())
        throw resource_error("cost_matrix: " + std::to_string(X.size()) + "x" +
                             std::to_string(Y.size()) + " exceeds entry cap");
    Matrix C(X.size(), Y.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const auto xi = X.point(i);
        double* out = C.row(i);
        for (std::size_t j = 0; j < Y.size(); ++j)
            out[j] = half_sq_dist(xi, Y.point(j));
    }
    return C;
}

// log Σ exp(v_i), max-subtracted so the largest term never overflows.
// Entries may be -Inf (excluded mass); an all -Inf vector yields -Inf.
inline double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("log_sum_exp: empty vector");
    double mx = -std::numeric_limits<double>::infinity();
    for (double a : v)
        if (a > mx) mx = a;
    if (mx == -std::numeric_limits<double>::infinity()) return mx;
    double s = 0.0;
    for (double a : v) s += std::exp(a - mx);
    return mx + std::log(s);
}

// log ( (1/len) Σ exp(v_i) ), the uniform-weights reduction used by the
// Sinkhorn updates.
inline double log_mean_exp(std::span<const double> v) {
    return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

}  // namespace entromap

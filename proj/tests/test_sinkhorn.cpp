#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include <entromap/bench.hpp>  // sample_uniform_cube for fixtures
#include <entromap/core.hpp>
#include <entromap/errors.hpp>
#include <entromap/sinkhorn.hpp>

using namespace entromap;

// Reference potentials below were produced by an independent 80-digit
// fixed-point iteration of the same update (g from f, then f from g, then a
// mean-f gauge shift), run to stationarity.

static double plan_at(const DualPotentials& pot, const PointCloud& X,
                      const PointCloud& Y, std::size_t i, std::size_t j) {
    return plan_density(pot, i, j, half_sq_dist(X.point(i), Y.point(j)));
}

TEST_CASE("sinkhorn_solve validates inputs") {
    const PointCloud X(2, 1, {0.0, 1.0});
    const PointCloud Y2(2, 2, {0.0, 0.0, 1.0, 1.0});
    CHECK_THROWS_AS(sinkhorn_solve(X, Y2, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(sinkhorn_solve(X, X, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sinkhorn_solve(X, X, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(sinkhorn_solve(X, X, 0.1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sinkhorn_solve(X, X, 0.1, 1e-6, 0), std::invalid_argument);
}

TEST_CASE("two identical 1-d points: converged potentials match the reference") {
    const PointCloud X(2, 1, {0.0, 1.0});
    const auto [pot, report] = sinkhorn_solve(X, X, 0.1);
    CHECK(report.converged);
    CHECK(report.iterations == 1);  // symmetric instance is stationary after one sweep
    CHECK(report.marginal_violation <= 1e-6);

    CHECK(std::abs(pot.f[0]) < 1e-13);
    CHECK(std::abs(pot.f[1]) < 1e-13);
    const double g_ref = 0.06864318320708272;
    CHECK(pot.g[0] == Catch::Approx(g_ref).margin(1e-12));
    CHECK(pot.g[1] == Catch::Approx(g_ref).margin(1e-12));

    CHECK(plan_at(pot, X, X, 0, 0) == Catch::Approx(1.986614298151430).margin(1e-11));
    CHECK(plan_at(pot, X, X, 0, 1) == Catch::Approx(0.013385701848569711).margin(1e-12));
    CHECK(plan_at(pot, X, X, 1, 0) == Catch::Approx(0.013385701848569711).margin(1e-12));

    // coupling mass on the diagonal (plan/(n*m)) concentrates there
    const double diag = (plan_at(pot, X, X, 0, 0) + plan_at(pot, X, X, 1, 1)) / 4.0;
    CHECK(diag == Catch::Approx(0.9933071490757151).margin(1e-11));
    CHECK(diag >= 0.98);

    CHECK(dual_objective(pot, X, X) == Catch::Approx(0.06864318320708272).margin(1e-12));
    CHECK(report.dual_trace.back() ==
          Catch::Approx(dual_objective(pot, X, X)).margin(1e-10));
}

TEST_CASE("rectangular 1-d instance: converged potentials match the reference") {
    const PointCloud X(2, 1, {-0.5, 0.25});
    const PointCloud Y(3, 1, {-1.0, 0.0, 1.0});
    const auto [pot, report] = sinkhorn_solve(X, Y, 0.5, 1e-13);
    CHECK(report.converged);

    CHECK(pot.f[0] == Catch::Approx(0.046875).margin(1e-11));   // = 3/64
    CHECK(pot.f[1] == Catch::Approx(-0.046875).margin(1e-11));
    CHECK(pot.g[0] == Catch::Approx(0.32399195128859645).margin(1e-11));
    CHECK(pot.g[1] == Catch::Approx(0.078125).margin(1e-11));   // = 5/64
    CHECK(pot.g[2] == Catch::Approx(0.57399195128859645).margin(1e-11));

    const double p00 = plan_at(pot, X, Y, 0, 0);
    const double p01 = plan_at(pot, X, Y, 0, 1);
    const double p02 = plan_at(pot, X, Y, 0, 2);
    CHECK(p00 == Catch::Approx(1.6351489523872873).margin(1e-10));
    CHECK(p01 == Catch::Approx(1.0).margin(1e-10));
    CHECK(p02 == Catch::Approx(0.36485104761271268).margin(1e-10));
    CHECK(plan_at(pot, X, Y, 1, 0) == Catch::Approx(p02).margin(1e-10));
    CHECK(plan_at(pot, X, Y, 1, 2) == Catch::Approx(p00).margin(1e-10));

    CHECK(dual_objective(pot, X, Y) ==
          Catch::Approx(0.32536963419239763).margin(1e-11));
}

TEST_CASE("3x3 2-d instance: converged potentials match the reference") {
    const PointCloud X(3, 2, {0.1, -0.3, -0.8, 0.5, 0.4, 0.9});
    const PointCloud Y(3, 2, {-0.2, 0.1, 0.6, -0.7, 0.9, 0.3});
    const auto [pot, report] = sinkhorn_solve(X, Y, 0.7, 1e-13);
    CHECK(report.converged);

    CHECK(pot.f[0] == Catch::Approx(-0.42609650153634934).margin(1e-10));
    CHECK(pot.f[1] == Catch::Approx(0.42956057765838310).margin(1e-10));
    CHECK(pot.f[2] == Catch::Approx(-0.0034640761220337689).margin(1e-10));
    CHECK(pot.g[0] == Catch::Approx(0.21194370108671282).margin(1e-10));
    CHECK(pot.g[1] == Catch::Approx(0.99497506090336181).margin(1e-10));
    CHECK(pot.g[2] == Catch::Approx(0.67868187192727103).margin(1e-10));

    const double expected[3][3] = {
        {0.61600265792640232, 1.6817358657206662, 0.70226147635293151},
        {1.7246189240653083, 0.67467747552215459, 0.60070360041253708},
        {0.65937841800828935, 0.64358665875717925, 1.6970349232345314}};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(plan_at(pot, X, Y, i, j) ==
                  Catch::Approx(expected[i][j]).margin(1e-9));

    CHECK(dual_objective(pot, X, Y) ==
          Catch::Approx(0.62853354463911522).margin(1e-10));
}

TEST_CASE("random instance obeys the convergence contract") {
    const PointCloud X = sample_uniform_cube(23, 3, 101);
    const PointCloud Y = sample_uniform_cube(31, 3, 102);
    const auto [pot, report] = sinkhorn_solve(X, Y, 0.35);
    REQUIRE(report.converged);
    CHECK(report.iterations >= 1);
    CHECK(report.marginal_violation <= 1e-6);
    CHECK(marginal_violation(pot, X, Y) <= 1.01e-6);

    // row marginals of the plan are exact by construction of the final f pass
    for (std::size_t i = 0; i < X.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < Y.size(); ++j) s += plan_at(pot, X, Y, i, j);
        CHECK(std::abs(s / static_cast<double>(Y.size()) - 1.0) <= 1e-12);
    }

    // dual ascent: the trace never decreases (up to fp noise)
    for (std::size_t k = 1; k < report.dual_trace.size(); ++k)
        CHECK(report.dual_trace[k] >= report.dual_trace[k - 1] - 1e-9);

    // gauge: mean f is zero after normalization
    double fsum = 0.0;
    for (double v : pot.f) fsum += v;
    CHECK(std::abs(fsum / static_cast<double>(X.size())) <= 1e-9);

    // the plan is only tol-feasible in its column marginals, so the primal
    // value may undershoot the dual by as much as tol * ||g||_inf
    const double dual = dual_objective(pot, X, Y);
    const double primal = primal_objective(pot, X, Y);
    double gmax = 0.0;
    for (double v : pot.g) gmax = std::max(gmax, std::abs(v));
    CHECK(primal >= dual - 1e-6 * (1.0 + gmax));
    CHECK(std::abs(primal - dual) <= 1e-6 * (1.0 + std::abs(dual)));
}

TEST_CASE("streamed rows reproduce the materialized solve bit for bit") {
    const PointCloud X = sample_uniform_cube(17, 2, 201);
    const PointCloud Y = sample_uniform_cube(29, 2, 202);
    const auto [pot_mat, rep_mat] = sinkhorn_solve(X, Y, 0.25);
    const auto [pot_str, rep_str] = sinkhorn_solve(X, Y, 0.25, default_tol,
                                                   default_max_iter, /*cost_cap=*/1);
    CHECK(rep_mat.iterations == rep_str.iterations);
    CHECK(pot_mat.f == pot_str.f);
    CHECK(pot_mat.g == pot_str.g);
    CHECK(rep_mat.dual_trace == rep_str.dual_trace);
}

TEST_CASE("joint translation leaves the plan unchanged") {
    const PointCloud X = sample_uniform_cube(12, 2, 301);
    const PointCloud Y = sample_uniform_cube(15, 2, 302);
    const std::vector<double> tau{3.75, -1.25};
    std::vector<double> xs = X.data(), ys = Y.data();
    for (std::size_t i = 0; i < xs.size(); i += 2)
        for (std::size_t j = 0; j < 2; ++j) xs[i + j] += tau[j];
    for (std::size_t i = 0; i < ys.size(); i += 2)
        for (std::size_t j = 0; j < 2; ++j) ys[i + j] += tau[j];
    const PointCloud Xt(X.size(), 2, std::move(xs));
    const PointCloud Yt(Y.size(), 2, std::move(ys));

    const auto [pot, rep] = sinkhorn_solve(X, Y, 0.4, 1e-10);
    const auto [pott, rept] = sinkhorn_solve(Xt, Yt, 0.4, 1e-10);
    REQUIRE(rep.converged);
    REQUIRE(rept.converged);
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < Y.size(); ++j)
            CHECK(plan_at(pott, Xt, Yt, i, j) ==
                  Catch::Approx(plan_at(pot, X, Y, i, j)).epsilon(1e-8));
    CHECK(dual_objective(pott, Xt, Yt) ==
          Catch::Approx(dual_objective(pot, X, Y)).margin(1e-8));
}

TEST_CASE("huge eps drives the plan to uniform") {
    const PointCloud X = sample_uniform_cube(4, 2, 401);
    const PointCloud Y = sample_uniform_cube(6, 2, 402);
    const auto [pot, rep] = sinkhorn_solve(X, Y, 1e9);
    REQUIRE(rep.converged);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(plan_at(pot, X, Y, i, j) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("max_iter caps the sweep count and reports non-convergence") {
    const PointCloud X = sample_uniform_cube(30, 2, 501);
    const PointCloud Y = sample_uniform_cube(30, 2, 502);
    const auto [pot, rep] = sinkhorn_solve(X, Y, 0.01, 1e-12, 1);
    CHECK_FALSE(rep.converged);
    CHECK(rep.iterations == 1);
    CHECK(rep.dual_trace.size() == 1);
    CHECK(detail::all_finite(pot.f));
    CHECK(detail::all_finite(pot.g));
}

TEST_CASE("diagnostics reject unusable inputs") {
    const PointCloud X = sample_uniform_cube(5, 2, 601);
    const PointCloud Y = sample_uniform_cube(7, 2, 602);
    DualPotentials zero;
    zero.f.assign(5, 0.0);
    zero.g.assign(7, 0.0);
    zero.eps = 1.0;
    // raw zero potentials are far from feasible
    CHECK_THROWS_AS(primal_objective(zero, X, Y), invalid_state);
    CHECK_THROWS_AS(plan_density(zero, 5, 0, 0.0), std::out_of_range);
    CHECK_THROWS_AS(plan_density(zero, 0, 7, 0.0), std::out_of_range);

    DualPotentials wrong;
    wrong.f.assign(4, 0.0);  // length mismatch
    wrong.g.assign(7, 0.0);
    wrong.eps = 1.0;
    CHECK_THROWS_AS(dual_objective(wrong, X, Y), std::invalid_argument);

    // dual_objective is overflow-safe for arbitrary potentials
    DualPotentials big;
    big.f.assign(5, 1000.0);
    big.g.assign(7, 1000.0);
    big.eps = 0.01;
    const double v = dual_objective(big, X, Y);
    CHECK_FALSE(std::isnan(v));
}

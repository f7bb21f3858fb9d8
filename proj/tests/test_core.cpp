#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <entromap/core.hpp>
#include <entromap/errors.hpp>
#include <entromap/io.hpp>
#include <entromap/parallel.hpp>

using namespace entromap;

static constexpr double kInf = std::numeric_limits<double>::infinity();

TEST_CASE("PointCloud validates shape and content") {
    CHECK_NOTHROW(PointCloud(2, 3, std::vector<double>(6, 0.0)));
    CHECK_THROWS_AS(PointCloud(0, 1, {}), std::invalid_argument);
    CHECK_THROWS_AS(PointCloud(1, 0, {}), std::invalid_argument);
    CHECK_THROWS_AS(PointCloud(2, 2, std::vector<double>(3, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(PointCloud(1, 2, {0.0, kInf}), std::invalid_argument);
    CHECK_THROWS_AS(PointCloud(1, 1, {std::nan("")}), std::invalid_argument);
}

TEST_CASE("PointCloud accessors") {
    const PointCloud c(2, 2, {1.0, 2.0, 3.0, 4.0});
    CHECK(c.size() == 2);
    CHECK(c.dim() == 2);
    CHECK(c.point(1)[0] == 3.0);
    CHECK(c.point(1)[1] == 4.0);
    CHECK_THROWS_AS(c.point(2), std::out_of_range);

    const auto r = PointCloud::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(r.data() == c.data());
    CHECK_THROWS_AS(PointCloud::from_rows({}), std::invalid_argument);
    CHECK_THROWS_AS(PointCloud::from_rows({{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("half_sq_dist basics") {
    const std::vector<double> a{0.0, 0.0}, b{1.0, 1.0};
    CHECK(half_sq_dist(a, b) == 1.0);
    CHECK(half_sq_dist(a, a) == 0.0);
    const std::vector<double> p{1.0}, q{-1.0};
    CHECK(half_sq_dist(p, q) == 2.0);
    CHECK_THROWS_AS(half_sq_dist(a, p), std::invalid_argument);
}

TEST_CASE("cost_matrix values and symmetry in arguments") {
    const PointCloud X(1, 2, {0.0, 0.0});
    const PointCloud Y(2, 2, {3.0, 4.0, 0.0, 1.0});
    const Matrix C = cost_matrix(X, Y);
    REQUIRE(C.rows == 1);
    REQUIRE(C.cols == 2);
    CHECK(C(0, 0) == 12.5);
    CHECK(C(0, 1) == 0.5);
    const Matrix Ct = cost_matrix(Y, X);
    CHECK(Ct(0, 0) == C(0, 0));
    CHECK(Ct(1, 0) == C(0, 1));
}

TEST_CASE("cost_matrix enforces the entry cap") {
    const PointCloud X(10, 1, std::vector<double>(10, 0.0));
    const PointCloud Y(10, 1, std::vector<double>(10, 0.0));
    CHECK_THROWS_AS(cost_matrix(X, Y, 99), resource_error);
    CHECK_NOTHROW(cost_matrix(X, Y, 100));
    const PointCloud Z(10, 2, std::vector<double>(20, 0.0));
    CHECK_THROWS_AS(cost_matrix(X, Z), std::invalid_argument);
}

TEST_CASE("log_sum_exp exact values") {
    const std::vector<double> two_zeros{0.0, 0.0};
    CHECK(log_sum_exp(two_zeros) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<double> single{3.25};
    CHECK(log_sum_exp(single) == 3.25);
    const std::vector<double> with_ninf{-kInf, 0.0};
    CHECK(log_sum_exp(with_ninf) == 0.0);
    const std::vector<double> all_ninf{-kInf, -kInf};
    CHECK(log_sum_exp(all_ninf) == -kInf);
    CHECK_THROWS_AS(log_sum_exp(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("log_sum_exp properties on random vectors") {
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> v(17);
        for (double& x : v) x = u(eng);
        const double lse = log_sum_exp(v);
        const double mx = *std::max_element(v.begin(), v.end());
        CHECK(lse >= mx);
        CHECK(lse <= mx + std::log(static_cast<double>(v.size())) + 1e-14);

        const double shift = u(eng);
        std::vector<double> w = v;
        for (double& x : w) x += shift;
        CHECK(log_sum_exp(w) == Catch::Approx(lse + shift).epsilon(1e-12));

        // huge common offset must not overflow
        std::vector<double> big = v;
        for (double& x : big) x += 1e6;
        CHECK(std::isfinite(log_sum_exp(big)));
        CHECK(log_sum_exp(big) == Catch::Approx(lse + 1e6).epsilon(1e-12));
    }
}

TEST_CASE("log_mean_exp of constant vector is the constant") {
    const std::vector<double> v(5, 1.75);
    CHECK(log_mean_exp(v) == Catch::Approx(1.75).margin(1e-15));
    const std::vector<double> zeros(3, 0.0);
    CHECK(log_mean_exp(zeros) == 0.0);
}

TEST_CASE("format_double round-trips exactly") {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int rep = 0; rep < 200; ++rep) {
        const double x = u(eng);
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0) == "1");
}

TEST_CASE("read_point_rows parses plain and headered CSV") {
    std::istringstream plain("0.5,1\n-2,3e-1\n");
    const auto rows = read_point_rows(plain);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<double>{0.5, 1.0});
    CHECK(rows[1] == std::vector<double>{-2.0, 0.3});

    std::istringstream headered("x,y\n1,2\n3,4\n");
    const auto hrows = read_point_rows(headered);
    REQUIRE(hrows.size() == 2);
    CHECK(hrows[0] == std::vector<double>{1.0, 2.0});

    std::istringstream empty("");
    CHECK(read_point_rows(empty).empty());
}

TEST_CASE("read_point_rows reports malformed rows with line numbers") {
    std::istringstream bad("1,2\n3,oops\n");
    try {
        read_point_rows(bad);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    std::istringstream ragged("1,2\n3\n");
    try {
        read_point_rows(ragged);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("cloud CSV round-trip") {
    const PointCloud c(3, 2, {0.125, -1.5, 2.0, 0.3, -0.7, 42.0});
    std::ostringstream out;
    write_cloud_csv(out, c);
    std::istringstream in(out.str());
    const PointCloud back = cloud_from_csv(in);
    CHECK(back.data() == c.data());

    std::istringstream none("\n\n");
    CHECK_THROWS_AS(cloud_from_csv(none), parse_error);
}

TEST_CASE("write_file_atomic leaves no temp files and overwrites") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "entromap_core_test";
    fs::create_directories(dir);
    const fs::path target = dir / "out.txt";
    write_file_atomic(target, "first");
    write_file_atomic(target, "second");
    std::ifstream in(target);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body == "second");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
    CHECK(entries == 1);
    fs::remove_all(dir);
}

TEST_CASE("parallel_blocks covers every block exactly once, any worker count") {
    for (const unsigned workers : {0u, 1u, 3u}) {
        ThreadPool pool(workers);
        std::vector<int> hits(37, 0);
        pool.for_each_block(hits.size(), [&](std::size_t b) { hits[b] += 1; });
        for (int h : hits) CHECK(h == 1);
    }
}

TEST_CASE("ThreadPool propagates the first exception") {
    ThreadPool pool(2);
    CHECK_THROWS_AS(pool.for_each_block(8,
                                        [&](std::size_t b) {
                                            if (b == 3) throw std::runtime_error("boom");
                                        }),
                    std::runtime_error);
    // pool still usable afterwards
    std::vector<int> hits(4, 0);
    pool.for_each_block(hits.size(), [&](std::size_t b) { hits[b] = 1; });
    for (int h : hits) CHECK(h == 1);
}

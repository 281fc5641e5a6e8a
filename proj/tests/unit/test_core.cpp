#include <doctest.h>

#include <cmath>

#include "l2r/core.hpp"

using namespace l2r;

namespace {

// naive oracle, kept independent of Mat internals
Vec hand_matvec(const std::vector<std::vector<double>>& m, const Vec& v) {
    Vec out(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
    return out;
}

Mat from_rows(const std::vector<std::vector<double>>& rows) {
    Mat m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[0].size(); ++j) m.at(i, j) = rows[i][j];
    return m;
}

}  // namespace

TEST_CASE("matvec identity and zero") {
    Vec v{1.0, 2.0, 3.0};
    CHECK(matvec(Mat::identity(3), v) == v);
    Vec z = matvec(Mat(2, 3), Vec{5.0, 5.0, 5.0});
    CHECK(z == Vec{0.0, 0.0});
}

TEST_CASE("matvec against hand multiplication") {
    std::vector<std::vector<double>> rows{{1.0, 2.0}, {3.0, 4.0}};
    Vec got = matvec(from_rows(rows), Vec{1.0, 1.0});
    CHECK(got == hand_matvec(rows, Vec{1.0, 1.0}));
    CHECK(got == Vec{3.0, 7.0});
}

TEST_CASE("matvec rejects dimension mismatch with explicit sizes") {
    try {
        matvec(Mat(2, 3), Vec{1.0});
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("1") != std::string::npos);
    }
}

TEST_CASE("matvec is linear") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Mat m(4, 6);
        for (double& x : m.data) x = rng.normal();
        Vec u(6), v(6);
        for (double& x : u) x = rng.normal();
        for (double& x : v) x = rng.normal();
        const double a = rng.normal(), b = rng.normal();
        Vec uv(6);
        for (std::size_t i = 0; i < 6; ++i) uv[i] = a * u[i] + b * v[i];
        Vec lhs = matvec(m, uv);
        Vec mu = matvec(m, u), mv = matvec(m, v);
        for (std::size_t i = 0; i < 4; ++i) {
            const double rhs = a * mu[i] + b * mv[i];
            CHECK(std::fabs(lhs[i] - rhs) <= 1e-12 * std::max(1.0, std::fabs(rhs)));
        }
    }
}

TEST_CASE("vecmat matches matvec of the transpose") {
    Rng rng(12);
    Mat m(5, 3);
    for (double& x : m.data) x = rng.normal();
    Vec v(5);
    for (double& x : v) x = rng.normal();
    Mat mt(3, 5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) mt.at(j, i) = m.at(i, j);
    CHECK(vecmat(v, m) == matvec(mt, v));
    CHECK_THROWS_AS(vecmat(Vec{1.0}, m), std::invalid_argument);
}

TEST_CASE("rmsnorm basics") {
    Vec ones4(4, 1.0);
    CHECK(rmsnorm(Vec{1, 1, 1, 1}, ones4, 0.0) == Vec{1, 1, 1, 1});
    CHECK(rmsnorm(Vec{0, 0}, Vec{1, 1}, 1e-6) == Vec{0, 0});

    // scalar arithmetic oracle: mean(x^2) = 12.5
    Vec out = rmsnorm(Vec{3, 4}, Vec{1, 1}, 0.0);
    const double s = std::sqrt((9.0 + 16.0) / 2.0);
    CHECK(out[0] == doctest::Approx(3.0 / s).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(4.0 / s).epsilon(1e-14));
    CHECK(out[0] == doctest::Approx(0.8485).epsilon(1e-4));
    CHECK(out[1] == doctest::Approx(1.1314).epsilon(1e-4));

    CHECK_THROWS_AS(rmsnorm(Vec{1, 2}, Vec{1}, 1e-6), std::invalid_argument);
}

TEST_CASE("rmsnorm output has unit RMS for gain 1") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x(8);
        for (double& v : x) v = 1.0 + rng.normal();
        Vec out = rmsnorm(x, Vec(8, 1.0), 1e-15);
        double ms = 0.0;
        for (double v : out) ms += v * v;
        CHECK(std::sqrt(ms / 8.0) == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("rng streams are reproducible and splittable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(42);
    Rng s1 = base.split("x");
    Rng s2 = base.split("y");
    CHECK(s1.next_u64() != s2.next_u64());
    // split is position-independent
    Rng c(42);
    c.next_u64();
    CHECK(c.split("x").next_u64() == Rng(42).split("x").next_u64());

    Rng u(7);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("sample_unit_sphere basics") {
    CHECK_THROWS_AS([] { Rng r(1); return sample_unit_sphere(r, 0); }(), std::invalid_argument);

    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        Vec v = sample_unit_sphere(rng, 1);
        CHECK((v[0] == 1.0 || v[0] == -1.0));
    }
    for (std::size_t r : {1u, 2u, 8u, 32u}) {
        for (int i = 0; i < 50; ++i) {
            Vec v = sample_unit_sphere(rng, r);
            CHECK(std::fabs(norm2(v) - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("sample_unit_sphere is isotropic (Monte-Carlo)") {
    Rng rng(1234);
    const int n_pairs = 50000;  // 1e5 samples consumed pairwise
    double mean_cos = 0.0;
    for (int i = 0; i < n_pairs; ++i) {
        Vec a = sample_unit_sphere(rng, 2);
        Vec b = sample_unit_sphere(rng, 2);
        mean_cos += dot(a, b);
    }
    mean_cos /= n_pairs;
    CHECK(std::fabs(mean_cos) < 0.01);
}

TEST_CASE("pca2 reproduces axis-aligned data") {
    // mean-centered, diagonal covariance with var(x) > var(y)
    std::vector<Vec> pts{{2, 0}, {-2, 0}, {0, 1}, {0, -1}};
    Pca2Result res = pca2(pts);
    CHECK(!res.degenerate);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(res.projected[i][0] == doctest::Approx(pts[i][0]).epsilon(1e-9));
        CHECK(res.projected[i][1] == doctest::Approx(pts[i][1]).epsilon(1e-9));
    }
    CHECK(res.var1 >= res.var2);
}

TEST_CASE("pca2 degenerate input maps to zero") {
    std::vector<Vec> pts{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
    Pca2Result res = pca2(pts);
    CHECK(res.degenerate);
    for (const Vec& p : res.projected) CHECK(p == Vec{0.0, 0.0});
}

TEST_CASE("pca2 rank-1 line embedded in 5-D") {
    Rng rng(77);
    Vec dir = sample_unit_sphere(rng, 5);
    std::vector<Vec> pts;
    for (int i = 0; i < 100; ++i) {
        const double t = rng.normal();
        Vec p(5);
        for (int j = 0; j < 5; ++j) p[j] = t * dir[j];
        pts.push_back(std::move(p));
    }
    Pca2Result res = pca2(pts);
    double n1 = 0.0, n2 = 0.0;
    for (const Vec& p : res.projected) {
        n1 += p[0] * p[0];
        n2 += p[1] * p[1];
    }
    CHECK(std::sqrt(n2) < 1e-8 * std::sqrt(n1));
    // orthonormal axes
    CHECK(std::fabs(dot(res.axis1, res.axis2)) < 1e-8);
    CHECK(std::fabs(norm2(res.axis1) - 1.0) < 1e-8);
    CHECK(std::fabs(norm2(res.axis2) - 1.0) < 1e-8);
}

TEST_CASE("pca2 component variances are ordered") {
    Rng rng(9);
    std::vector<Vec> pts;
    for (int i = 0; i < 60; ++i) {
        Vec p(4);
        for (double& v : p) v = rng.normal();
        pts.push_back(std::move(p));
    }
    Pca2Result res = pca2(pts);
    double v1 = 0.0, v2 = 0.0;
    for (const Vec& p : res.projected) {
        v1 += p[0] * p[0];
        v2 += p[1] * p[1];
    }
    CHECK(v1 >= v2 - 1e-9);
    CHECK(res.var1 >= res.var2 - 1e-12);
}

TEST_CASE("pca2 rejects bad inputs") {
    CHECK_THROWS_AS(pca2({{1, 2}, {3, 4}}), std::invalid_argument);
    CHECK_THROWS_AS(pca2({{1}, {2}, {3}}), std::invalid_argument);
    CHECK_THROWS_AS(pca2({{1, 2}, {3, 4}, {1, 2, 3}}), std::invalid_argument);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "pstr/matrix.hpp"

using pstr::Matrix;

TEST_CASE("construction zero-fills and indexing is row major") {
    Matrix m(2, 3);
    CHECK(m.v.size() == 6);
    for (double x : m.v) CHECK(x == 0.0);
    m(1, 2) = 5.0;
    CHECK(m.v[5] == 5.0);
    CHECK(m.row(1)[2] == 5.0);
}

TEST_CASE("axpy") {
    Matrix y(2, 2), x(2, 2);
    x.fill(1.0);
    y.fill(2.0);
    pstr::axpy(y, -0.5, x);
    for (double v : y.v) CHECK(v == doctest::Approx(1.5));
    Matrix bad(3, 2);
    CHECK_THROWS_AS(pstr::axpy(y, 1.0, bad), pstr::ArgumentError);
}

TEST_CASE("matvec against a hand-computed product") {
    Matrix w(2, 3);
    // [[1,2,3],[4,5,6]]
    for (int i = 0; i < 6; ++i) w.v[static_cast<std::size_t>(i)] = i + 1;
    const double x[3] = {1.0, -1.0, 2.0};
    double out[2];
    pstr::matvec(w, x, out);
    CHECK(out[0] == doctest::Approx(1.0 - 2.0 + 6.0));
    CHECK(out[1] == doctest::Approx(4.0 - 5.0 + 12.0));
}

TEST_CASE("matvec_transpose_add accumulates W^T g") {
    Matrix w(2, 3);
    for (int i = 0; i < 6; ++i) w.v[static_cast<std::size_t>(i)] = i + 1;
    const double g[2] = {1.0, 2.0};
    double out[3] = {10.0, 0.0, 0.0};
    pstr::matvec_transpose_add(w, g, out);
    CHECK(out[0] == doctest::Approx(10.0 + 1.0 * 1 + 2.0 * 4));
    CHECK(out[1] == doctest::Approx(1.0 * 2 + 2.0 * 5));
    CHECK(out[2] == doctest::Approx(1.0 * 3 + 2.0 * 6));
}

TEST_CASE("outer_add") {
    Matrix dw(2, 2);
    const double g[2] = {2.0, 3.0};
    const double x[2] = {5.0, 7.0};
    pstr::outer_add(dw, g, x);
    CHECK(dw(0, 0) == 10.0);
    CHECK(dw(0, 1) == 14.0);
    CHECK(dw(1, 0) == 15.0);
    CHECK(dw(1, 1) == 21.0);
}

TEST_CASE("norm, max_abs, all_finite") {
    Matrix m(1, 3);
    m(0, 0) = 3.0;
    m(0, 1) = -4.0;
    CHECK(m.norm() == doctest::Approx(5.0));
    CHECK(m.max_abs() == doctest::Approx(4.0));
    CHECK(m.all_finite());
    m(0, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(m.all_finite());
}

TEST_CASE("equality is exact") {
    Matrix a(1, 2), b(1, 2);
    a(0, 0) = 1.0;
    b(0, 0) = 1.0;
    CHECK(a == b);
    b(0, 1) = 1e-300;
    CHECK_FALSE(a == b);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "pstr/rng.hpp"

using pstr::SplitMix64;

TEST_CASE("splitmix64 reference vector") {
    SplitMix64 rng(1234567ULL);
    CHECK(rng.next_u64() == 6457827717110365317ULL);
    CHECK(rng.next_u64() == 3203168211198807973ULL);
    CHECK(rng.next_u64() == 9817491932198370423ULL);
    CHECK(rng.next_u64() == 4593380528125082431ULL);
    CHECK(rng.next_u64() == 16408922859458223821ULL);
}

TEST_CASE("next_double matches bit-level construction") {
    SplitMix64 rng(0ULL);
    CHECK(rng.next_double() == doctest::Approx(0.8833108082136426).epsilon(1e-15));
    SplitMix64 rng2(42ULL);
    for (int i = 0; i < 1000; ++i) {
        const double d = rng2.next_double();
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("next_int stays in the inclusive range and hits both ends") {
    SplitMix64 rng(7ULL);
    std::set<std::int64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const std::int64_t v = rng.next_int(-3, 4);
        CHECK(v >= -3);
        CHECK(v <= 4);
        seen.insert(v);
    }
    CHECK(seen.count(-3) == 1);
    CHECK(seen.count(4) == 1);
    CHECK(seen.size() == 8);
}

TEST_CASE("next_int on a unit range is constant") {
    SplitMix64 rng(9ULL);
    for (int i = 0; i < 100; ++i) CHECK(rng.next_int(5, 5) == 5);
}

TEST_CASE("uniform bounds") {
    SplitMix64 rng(1ULL);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform(-2.5, 0.5);
        CHECK(u >= -2.5);
        CHECK(u < 0.5);
    }
}

TEST_CASE("gaussian moments are sane") {
    SplitMix64 rng(3ULL);
    double sum = 0.0, sum2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum2 += g * g;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("streams are decorrelated and deterministic") {
    SplitMix64 a = SplitMix64::stream(11, 0);
    SplitMix64 b = SplitMix64::stream(11, 1);
    SplitMix64 a2 = SplitMix64::stream(11, 0);
    CHECK(a.next_u64() != b.next_u64());
    SplitMix64 a3 = SplitMix64::stream(11, 0);
    CHECK(a3.next_u64() == a2.next_u64());
}

TEST_CASE("fnv1a reference values") {
    CHECK(pstr::fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(pstr::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(pstr::fnv1a("hello") == 0xa430d84680aabd0bULL);
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "snc/brownian.hpp"

using namespace snc;

TEST_CASE("sampling is a deterministic function of (seed, dt, T)") {
    const BrownianPath p1 = BrownianPath::sample(42, 0.01, 1.0);
    const BrownianPath p2 = BrownianPath::sample(42, 0.01, 1.0);
    REQUIRE(p1.n_steps() == 100);
    for (int i = 0; i < p1.n_steps(); ++i) CHECK(p1.increment(i) == p2.increment(i));
    const BrownianPath p3 = BrownianPath::sample(43, 0.01, 1.0);
    CHECK(p1.increment(0) != p3.increment(0));
}

TEST_CASE("grid preconditions") {
    CHECK_THROWS_AS(BrownianPath::sample(1, -0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BrownianPath::sample(1, 0.3, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BrownianPath::sample(1, 0.1, -1.0), std::invalid_argument);
}

TEST_CASE("single-increment variance and terminal mean match the law") {
    const int n = 100000;
    const double T = 0.7;
    double sum = 0.0, sumsq = 0.0;
    for (int s = 0; s < n; ++s) {
        const BrownianPath p = BrownianPath::sample(rng::derive_seed(7, s), T, T);
        const double w = p.value(1);
        sum += w;
        sumsq += w * w;
    }
    const double mean = sum / n;
    const double var = sumsq / n;
    // mean of W(T): sd = sqrt(T/n); variance estimator: sd = T sqrt(2/n)
    CHECK(std::abs(mean) < 3.0 * std::sqrt(T / n));
    CHECK(std::abs(var - T) < 3.0 * T * std::sqrt(2.0 / n));
}

TEST_CASE("cumulative values are prefix sums") {
    const BrownianPath p = BrownianPath::sample(5, 0.125, 1.0);
    CHECK(p.value(0) == 0.0);
    double acc = 0.0;
    for (int i = 0; i < p.n_steps(); ++i) {
        acc += p.increment(i);
        CHECK(std::abs(p.value(i + 1) - acc) < 1e-14);
    }
}

TEST_CASE("bridge refinement keeps coarse nodes exactly") {
    const BrownianPath coarse = BrownianPath::sample(11, 0.25, 1.0);
    const BrownianPath fine = coarse.refine(4);
    REQUIRE(fine.n_steps() == 16);
    for (int i = 0; i <= coarse.n_steps(); ++i) CHECK(fine.value(4 * i) == coarse.value(i));
    CHECK_THROWS_AS(coarse.refine(1), std::invalid_argument);
    CHECK_THROWS_AS(coarse.refine(3), std::invalid_argument);
}

TEST_CASE("bridge midpoint deviation has variance dt/4") {
    const int n = 100000;
    const double dt = 1.0;
    double sumsq = 0.0;
    for (int s = 0; s < n; ++s) {
        const BrownianPath p = BrownianPath::sample(rng::derive_seed(13, s), dt, dt);
        const BrownianPath f = p.refine(2);
        const double dev = f.value(1) - 0.5 * (p.value(0) + p.value(1));
        sumsq += dev * dev;
    }
    const double var = sumsq / n;
    const double target = dt / 4.0;
    CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / n));
}

TEST_CASE("exponential factor is 1 at t=0 and for a=0, and is a martingale") {
    const BrownianPath p = BrownianPath::sample(3, 0.25, 1.0);
    CHECK(p.exp_factor(0.7, 0) == 1.0);
    for (int i = 0; i <= p.n_steps(); ++i) CHECK(p.exp_factor(0.0, i) == 1.0);
    CHECK_THROWS_AS(p.exp_factor_at(1.0, 0.3), std::invalid_argument);

    const int n = 100000;
    const double a = 1.0, T = 1.0;
    double sum = 0.0;
    for (int s = 0; s < n; ++s) {
        const BrownianPath q = BrownianPath::sample(rng::derive_seed(29, s), T, T);
        sum += q.exp_factor(a, 1);
    }
    const double sd = std::sqrt((std::exp(a * a * T) - 1.0) / n);
    CHECK(std::abs(sum / n - 1.0) < 3.0 * sd);
}

TEST_CASE("quadratic variation approaches T") {
    const double T = 1.0;
    std::vector<double> relerr;
    for (int s = 0; s < 100; ++s) {
        const BrownianPath p = BrownianPath::sample(rng::derive_seed(31, s), T / 4096, T);
        double qv = 0.0;
        for (double d : p.increments()) qv += d * d;
        relerr.push_back(std::abs(qv - T) / T);
    }
    std::sort(relerr.begin(), relerr.end());
    CHECK(relerr[50] <= 0.05);
}

TEST_CASE("binary dump round trip") {
    const BrownianPath p = BrownianPath::sample(99, 0.125, 1.0);
    const std::string file = "path_dump_test.bin";
    p.write_binary(file);
    const BrownianPath q = BrownianPath::read_binary(file);
    std::remove(file.c_str());
    CHECK(q.seed() == p.seed());
    CHECK(q.dt() == p.dt());
    CHECK(q.horizon() == p.horizon());
    for (int i = 0; i < p.n_steps(); ++i) CHECK(q.increment(i) == p.increment(i));
}

TEST_CASE("from_increments supports tail edits without touching the head") {
    const BrownianPath p = BrownianPath::sample(123, 0.25, 1.0);
    std::vector<double> inc = p.increments();
    inc[3] += 1.0;
    const BrownianPath q = BrownianPath::from_increments(123, 0.25, 1.0, inc);
    for (int i = 0; i <= 3; ++i) CHECK(q.value(i) == p.value(i));
    CHECK(q.value(4) != p.value(4));
}

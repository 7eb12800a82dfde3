#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "snc/brownian.hpp"
#include "snc/lr_control.hpp"
#include "snc/sde.hpp"
#include "snc/spectral.hpp"
#include "snc/stats.hpp"

using namespace snc;

namespace {

LinearSpde make_spde(const SpectralGrid& grid, double a) {
    return LinearSpde{&grid, Eigen::MatrixXd::Identity(grid.n_modes(), grid.n_modes()), a};
}

Eigen::VectorXd random_modes(const SpectralGrid& grid, std::uint64_t seed, int active, double scale) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(grid.n_modes());
    for (int k = 0; k < std::min(active, grid.n_modes()); ++k)
        v[k] = scale * rng::gaussian(seed, 0x5eed, k);
    return v;
}

}  // namespace

TEST_CASE("single-mode heat decay is exact") {
    SpectralGrid g(1.0, 1, 2);
    LinearSpde spde = make_spde(g, 0.0);
    Eigen::VectorXd y(1);
    y << 1.0;
    const Eigen::VectorXd out = step_linear(spde, y, nullptr, nullptr, nullptr, 0.0, 0.1);
    CHECK(out[0] == Catch::Approx(0.37270783885343794).epsilon(1e-13));
}

TEST_CASE("pure multiplicative dynamics follow the geometric solution at every node") {
    SpectralGrid g(1.0, 4, 8);
    const double a = 0.8;
    LinearSpde spde = make_spde(g, a);
    const BrownianPath path = BrownianPath::sample(17, 1.0 / 64, 1.0);
    Eigen::VectorXd y0(4);
    y0 << 1.0, -0.5, 0.25, 2.0;
    const Trajectory traj = solve_linear(spde, y0, nullptr, nullptr, nullptr, path, 0.0, 1.0);
    for (int i = 0; i < traj.n_nodes(); ++i) {
        const double t = traj.time(i);
        for (int k = 0; k < 4; ++k) {
            const double expect =
                y0[k] * std::exp((-g.eigenvalue(k + 1) - 0.5 * a * a) * t + a * path.value(i));
            CHECK(traj.states(k, i) == Catch::Approx(expect).epsilon(1e-12).margin(1e-300));
        }
    }
}

TEST_CASE("constant drift source integrates to y0 + c t on a near-zero mode") {
    SpectralGrid g(100.0, 1, 2);  // lambda_1 = (pi/100)^2, nearly zero
    LinearSpde spde = make_spde(g, 0.0);
    const BrownianPath path = BrownianPath::sample(1, 1.0 / 256, 1.0);
    Eigen::VectorXd y0(1), c(1);
    y0 << 1.0;
    c << 1.0;
    NodeFn F = [&](int, double) { return c; };
    const Trajectory traj = solve_linear(spde, y0, nullptr, F, nullptr, path, 0.0, 1.0);
    CHECK(traj.terminal()[0] == Catch::Approx(2.0).epsilon(0.01));
}

TEST_CASE("zero inputs give the zero trajectory") {
    SpectralGrid g(1.0, 8, 16);
    LinearSpde spde = make_spde(g, 0.5);
    const BrownianPath path = BrownianPath::sample(2, 1.0 / 32, 1.0);
    const Trajectory traj =
        solve_linear(spde, Eigen::VectorXd::Zero(8), nullptr, nullptr, nullptr, path, 0.0, 1.0);
    CHECK(traj.states.cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(
        solve_linear(spde, Eigen::VectorXd::Zero(8), nullptr, nullptr, nullptr, path, 0.0, 2.0),
        std::invalid_argument);
}

TEST_CASE("solve_linear is additive in (y0, h, F, G) pathwise") {
    SpectralGrid g(1.0, 6, 12);
    LinearSpde spde = make_spde(g, 0.4);
    const BrownianPath path = BrownianPath::sample(23, 1.0 / 128, 1.0);
    const Eigen::VectorXd y0a = random_modes(g, 1, 6, 1.0), y0b = random_modes(g, 2, 6, 0.7);
    const Eigen::VectorXd Fa = random_modes(g, 3, 6, 0.5), Fb = random_modes(g, 4, 6, 0.3);
    const Eigen::VectorXd Ga = random_modes(g, 5, 6, 0.2), Gb = random_modes(g, 6, 6, 0.4);
    const Eigen::VectorXd ha = random_modes(g, 7, 6, 0.6), hb = random_modes(g, 8, 6, 0.1);
    auto fn = [](const Eigen::VectorXd& v) {
        return NodeFn([v](int, double) { return v; });
    };
    const Trajectory ta = solve_linear(spde, y0a, fn(ha), fn(Fa), fn(Ga), path, 0.0, 1.0);
    const Trajectory tb = solve_linear(spde, y0b, fn(hb), fn(Fb), fn(Gb), path, 0.0, 1.0);
    const Trajectory tab =
        solve_linear(spde, y0a + y0b, fn(ha + hb), fn(Fa + Fb), fn(Ga + Gb), path, 0.0, 1.0);
    const double scale = tab.states.cwiseAbs().maxCoeff();
    CHECK(((ta.states + tb.states) - tab.states).cwiseAbs().maxCoeff() < 1e-10 * std::max(scale, 1.0));
}

TEST_CASE("oracle reduces to the deterministic heat solver and geometric formula") {
    SpectralGrid g(1.0, 1, 2);
    LinearSpde spde = make_spde(g, 0.0);
    const BrownianPath path = BrownianPath::sample(3, 1.0 / 512, 1.0);
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    const Trajectory traj = oracle_transform_solution(spde, y0, nullptr, nullptr, path, 0.0, 1.0);
    for (int i = 0; i < traj.n_nodes(); i += 64)
        CHECK(traj.states(0, i) ==
              Catch::Approx(std::exp(-g.eigenvalue(1) * traj.time(i))).margin(1e-10));

    LinearSpde noisy = make_spde(g, 0.6);
    const Trajectory straj = oracle_transform_solution(noisy, y0, nullptr, nullptr, path, 0.0, 1.0);
    for (int i = 0; i < straj.n_nodes(); i += 64) {
        const double t = straj.time(i);
        const double expect = std::exp((-g.eigenvalue(1) - 0.18) * t + 0.6 * path.value(i));
        CHECK(straj.states(0, i) == Catch::Approx(expect).epsilon(1e-13));
    }
    CHECK_THROWS_AS(oracle_transform_solution(noisy, y0, nullptr, nullptr,
                                              BrownianPath::sample(3, 2.0, 2.0), 0.0, 0.5),
                    std::invalid_argument);
}

TEST_CASE("stepper converges strongly to the transform oracle with order about one") {
    SpectralGrid g(1.0, 8, 16);
    LinearSpde spde = make_spde(g, 0.5);
    const double T = 0.5;
    const int n_paths = 20;
    const Eigen::VectorXd y0 = random_modes(g, 77, 8, 1.0);
    NodeFn F = [&](int, double t) {
        return Eigen::VectorXd(random_modes(g, 78, 8, 1.0) * std::cos(3.0 * t));
    };
    std::vector<double> dts, errs;
    for (int level = 0; level < 4; ++level) {
        const int steps = 64 << level;
        double err = 0.0;
        for (int p = 0; p < n_paths; ++p) {
            BrownianPath path = BrownianPath::sample(rng::derive_seed(500, p), T / 64, T);
            if (level > 0) path = path.refine(1 << level);
            const Trajectory num = solve_linear(spde, y0, nullptr, F, nullptr, path, 0.0, T);
            const Trajectory ora = oracle_transform_solution(spde, y0, nullptr, F, path, 0.0, T);
            err += (num.terminal() - ora.terminal()).norm();
        }
        dts.push_back(std::log(T / steps));
        errs.push_back(std::log(err / n_paths));
    }
    const AffineFit fit = fit_affine(dts, errs);
    CHECK(fit.slope >= 0.9);
}

TEST_CASE("second moment matches the Ito formula e^{(-2 lambda + a^2) t} per mode") {
    SpectralGrid g(1.0, 1, 2);
    const double a = 0.5, t = 0.5;
    LinearSpde spde = make_spde(g, a);
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    const int n = 10000;
    double sum = 0.0, sumsq = 0.0;
    for (int p = 0; p < n; ++p) {
        const BrownianPath path = BrownianPath::sample(rng::derive_seed(900, p), t / 8, t);
        const Trajectory traj = solve_linear(spde, y0, nullptr, nullptr, nullptr, path, 0.0, t);
        const double v = traj.terminal()[0] * traj.terminal()[0];
        sum += v;
        sumsq += v * v;
    }
    const double lam = g.eigenvalue(1);
    const double expect = std::exp((-2.0 * lam + a * a) * t);
    const double second = std::exp(2.0 * (-2.0 * lam - a * a) * t + 8.0 * a * a * t);
    const double sd = std::sqrt(std::max(second - expect * expect, 0.0) / n);
    CHECK(std::abs(sum / n - expect) < 3.0 * sd);
}

TEST_CASE("energy estimates stay within a stable constant across random trials") {
    SpectralGrid g(1.0, 16, 32);
    const double tau = 0.5, a = 0.5;
    LinearSpde spde = make_spde(g, a);
    std::vector<double> ratios_l2, ratios_h1;
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd y0 = random_modes(g, rng::derive_seed(40, trial), 16, 1.0);
        Eigen::VectorXd Fv = random_modes(g, rng::derive_seed(41, trial), 16, 1.0);
        Eigen::VectorXd Gv = random_modes(g, rng::derive_seed(42, trial), 16, 1.0);
        y0 /= sobolev_norm(y0, g, 0);
        Fv /= sobolev_norm(Fv, g, 0);
        Gv /= sobolev_norm(Gv, g, 0);
        NodeFn F = [&](int, double) { return Fv; };
        NodeFn G = [&](int, double) { return Gv; };
        double sup_l2 = 0.0, sup_h1 = 0.0, int_h2 = 0.0;
        const int n_paths = 4;
        for (int p = 0; p < n_paths; ++p) {
            const BrownianPath path =
                BrownianPath::sample(rng::derive_seed(43 + trial, p), tau / 128, tau);
            const Trajectory traj = solve_linear(spde, y0, nullptr, F, G, path, 0.0, tau);
            double s0 = 0.0, s1 = 0.0, i2 = 0.0;
            for (int i = 0; i < traj.n_nodes(); ++i) {
                s0 = std::max(s0, std::pow(sobolev_norm(traj.states.col(i), g, 0), 2));
                s1 = std::max(s1, std::pow(sobolev_norm(traj.states.col(i), g, 1), 2));
                const double w = (i == 0 || i == traj.n_nodes() - 1) ? 0.5 : 1.0;
                i2 += w * (tau / 128) * std::pow(sobolev_norm(traj.states.col(i), g, 2), 2);
            }
            sup_l2 += s0 / n_paths;
            sup_h1 += (s1 + i2) / n_paths;
            (void)int_h2;
        }
        const double den_l2 = 1.0 + tau * (std::pow(h_minus1_norm(Fv, g), 2) + 1.0);
        const double den_h1 =
            std::pow(sobolev_norm(y0, g, 1), 2) + tau * (1.0 + std::pow(sobolev_norm(Gv, g, 1), 2));
        ratios_l2.push_back(sup_l2 / den_l2);
        ratios_h1.push_back(sup_h1 / den_h1);
    }
    auto stable = [](std::vector<double> r) {
        const double mx = *std::max_element(r.begin(), r.end());
        return mx / median(r);
    };
    CHECK(stable(ratios_l2) < 10.0);
    CHECK(stable(ratios_h1) < 10.0);
}

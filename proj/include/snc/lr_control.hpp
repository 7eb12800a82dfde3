// Null control of the linear SPDE per path: HUM/Gramian steering of the
// noise-transformed projected system, the active/passive spectral scheduler,
// observability constants, and control-cost experiments.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snc/brownian.hpp"
#include "snc/sde.hpp"
#include "snc/spectral.hpp"
#include "snc/stats.hpp"

namespace snc {

class ConditioningError : public std::runtime_error {
public:
    ConditioningError(double condition, int window)
        : std::runtime_error("Gramian conditioning failure (cond ~ " + std::to_string(condition) +
                             (window >= 0 ? ", window " + std::to_string(window) : std::string()) + ")"),
          condition_(condition),
          window_(window) {}
    double condition() const { return condition_; }
    int window() const { return window_; }

private:
    double condition_;
    int window_;
};

// Active/passive schedule: a_0 = 0, a_{k+1} = a_k + 2 T_k with T_k = T/2^{k+2},
// spectral cutoffs mu_k = M_spec 4^k.
struct LRSchedule {
    double T = 1.0;
    double M_spec = 10.0;
    int k_max = 6;
    std::vector<double> a;         // a_0 .. a_{k_max+1}
    std::vector<double> duration;  // T_0 .. T_{k_max}
    std::vector<double> mu;        // mu_0 .. mu_{k_max}
};

inline LRSchedule build_lr_schedule(double T, double M_spec, int k_max) {
    if (!(T > 0.0)) throw std::invalid_argument("build_lr_schedule: T must be positive");
    if (!(M_spec > 0.0)) throw std::invalid_argument("build_lr_schedule: M_spec must be positive");
    if (k_max < 1) throw std::invalid_argument("build_lr_schedule: k_max must be >= 1");
    LRSchedule s;
    s.T = T;
    s.M_spec = M_spec;
    s.k_max = k_max;
    s.a.resize(k_max + 2);
    s.duration.resize(k_max + 1);
    s.mu.resize(k_max + 1);
    s.a[0] = 0.0;
    for (int k = 0; k <= k_max; ++k) {
        s.duration[k] = T / std::pow(2.0, k + 2);
        s.a[k + 1] = s.a[k] + 2.0 * s.duration[k];
        s.mu[k] = M_spec * std::pow(2.0, 2 * k);
        if (k > 0 && !(s.mu[k] > s.mu[k - 1]))
            throw std::logic_error("build_lr_schedule: cutoffs not increasing");
    }
    if (s.a[k_max + 1] > T * (1.0 + 1e-12))
        throw std::logic_error("build_lr_schedule: partial sums exceed T");
    return s;
}

// Continuous controllability Gramian of the projected transformed system:
// G_{ij} = B_{ij} (1 - e^{-(lambda_i+lambda_j) tau}) / (lambda_i + lambda_j).
inline Eigen::MatrixXd hum_gramian_from(const Eigen::VectorXd& eigs, double tau,
                                        const Eigen::MatrixXd& B) {
    if (!(tau > 0.0)) throw std::invalid_argument("hum_gramian: tau must be positive");
    const int m = static_cast<int>(eigs.size());
    if (B.rows() != m || B.cols() != m) throw std::invalid_argument("hum_gramian: B size mismatch");
    Eigen::MatrixXd G(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const double s = eigs[i] + eigs[j];
            G(i, j) = B(i, j) * (-std::expm1(-s * tau)) / s;
        }
    return G;
}

inline Eigen::MatrixXd hum_gramian(const SpectralGrid& grid, double mu, double tau,
                                   const Eigen::MatrixXd& B_full) {
    const int m = modes_below(grid, mu);
    if (m == 0) throw std::invalid_argument("hum_gramian: no modes below cutoff");
    return hum_gramian_from(grid.eigenvalues().head(m), tau, B_full.topLeftCorner(m, m));
}

// Gramian of the exponential-Euler recursion x_{i+1} = e^{-L dt} x_i + dt B q_i
// over n steps; the Riemann-sum analogue of the continuous Gramian, so the
// discrete flow steered with it lands on zero exactly.
inline Eigen::MatrixXd hum_gramian_discrete(const Eigen::VectorXd& eigs, double dt, int n_steps,
                                            const Eigen::MatrixXd& B) {
    if (!(dt > 0.0) || n_steps < 1) throw std::invalid_argument("hum_gramian_discrete: bad grid");
    const int m = static_cast<int>(eigs.size());
    Eigen::MatrixXd G(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const double s = (eigs[i] + eigs[j]) * dt;
            // dt * (1 - e^{-s n}) / (1 - e^{-s})
            G(i, j) = B(i, j) * dt * std::expm1(-s * n_steps) / std::expm1(-s);
        }
    return G;
}

// SPD solve through an eigendecomposition with the documented Tikhonov
// fallback: shift 1e-12 tr(G)/m when the condition estimate exceeds 1e12;
// still-degenerate Gramians raise ConditioningError.
class GramianSolver {
public:
    explicit GramianSolver(const Eigen::MatrixXd& G, int window = -1) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
        if (es.info() != Eigen::Success) throw ConditioningError(std::nan(""), window);
        const double emax = es.eigenvalues().maxCoeff();
        const double emin = es.eigenvalues().minCoeff();
        cond_ = (emin > 0.0) ? emax / emin : std::numeric_limits<double>::infinity();
        shift_ = 0.0;
        if (!(emin > 0.0) || cond_ > 1e12) {
            shift_ = 1e-12 * G.trace() / G.rows();
            const double emin2 = emin + shift_;
            if (!(emin2 > 0.0) || (emax + shift_) / emin2 > 1e16)
                throw ConditioningError(cond_, window);
        }
        vectors_ = es.eigenvectors();
        inv_values_ = (es.eigenvalues().array() + shift_).inverse();
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        return vectors_ * (inv_values_ * (vectors_.transpose() * rhs).array()).matrix();
    }

    double condition() const { return cond_; }
    double shift() const { return shift_; }

private:
    Eigen::MatrixXd vectors_;
    Eigen::ArrayXd inv_values_;
    double cond_ = 0.0;
    double shift_ = 0.0;
};

// Minimal-L2 steering of the projected deterministic flow
// xdot = -Lambda x + B q to zero at tau: q(t) = e^{-Lambda (tau-t)} eta with
// eta = -G^{-1} e^{-Lambda tau} x0 and cost eta^T G eta.
struct HumControl {
    Eigen::VectorXd eigs;
    double tau = 0.0;
    Eigen::VectorXd eta;
    double cost = 0.0;
    double condition = 0.0;

    Eigen::VectorXd q_at(double t) const {
        return ((-(tau - t)) * eigs.array()).exp() * eta.array();
    }
};

inline HumControl hum_control(const Eigen::VectorXd& x0, const Eigen::VectorXd& eigs, double tau,
                              const Eigen::MatrixXd& B) {
    if (x0.size() != eigs.size()) throw std::invalid_argument("hum_control: size mismatch");
    const Eigen::MatrixXd G = hum_gramian_from(eigs, tau, B);
    GramianSolver solver(G);
    HumControl hc;
    hc.eigs = eigs;
    hc.tau = tau;
    const Eigen::VectorXd target = ((-tau) * eigs.array()).exp() * x0.array();
    hc.eta = -solver.solve(target);
    // one refinement pass against the (possibly shifted) matrix
    const Eigen::VectorXd resid = G * hc.eta + target;
    hc.eta -= solver.solve(resid);
    hc.cost = hc.eta.dot(G * hc.eta);
    hc.condition = solver.condition();
    return hc;
}

// Closed-form endpoint of the continuous projected flow under a HumControl.
inline Eigen::VectorXd hum_flow_endpoint(const Eigen::VectorXd& x0, const HumControl& hc,
                                         const Eigen::MatrixXd& B) {
    const Eigen::MatrixXd G = hum_gramian_from(hc.eigs, hc.tau, B);
    return (((-hc.tau) * hc.eigs.array()).exp() * x0.array()).matrix() + G * hc.eta;
}

// Discrete counterpart used inside path runs: steers the stepper recursion
// exactly (up to solver accuracy) in the deterministic/transformed frame.
struct DiscreteSteering {
    Eigen::VectorXd eigs;
    double dt = 0.0;
    int n_steps = 0;
    Eigen::VectorXd eta;
    double cost = 0.0;
    double condition = 0.0;

    // q at local step i in [0, n_steps): e^{-Lambda (n-1-i) dt} eta
    Eigen::VectorXd q_at_step(int i) const {
        return ((-(n_steps - 1 - i) * dt) * eigs.array()).exp() * eta.array();
    }
};

inline DiscreteSteering discrete_hum_control(const Eigen::VectorXd& x0, const Eigen::VectorXd& eigs,
                                             double dt, int n_steps, const Eigen::MatrixXd& B,
                                             int window = -1) {
    DiscreteSteering ds;
    ds.eigs = eigs;
    ds.dt = dt;
    ds.n_steps = n_steps;
    const Eigen::MatrixXd G = hum_gramian_discrete(eigs, dt, n_steps, B);
    GramianSolver solver(G);
    const Eigen::VectorXd target = ((-dt * n_steps) * eigs.array()).exp() * x0.array();
    ds.eta = -solver.solve(target);
    const Eigen::VectorXd resid = G * ds.eta + target;
    ds.eta -= solver.solve(resid);
    ds.cost = ds.eta.dot(G * ds.eta);
    ds.condition = solver.condition();
    return ds;
}

// Control expressed in the restricted basis chi_{D0} phi_k, stored per path
// node; identically zero on passive subintervals.
struct ControlSignal {
    std::vector<double> times;
    Eigen::MatrixXd coeffs;  // n_modes x n_nodes
    double total_cost = 0.0;
    std::vector<std::pair<int, int>> active_windows;  // [start, end) node ranges

    NodeFn as_fn() const {
        const ControlSignal* self = this;
        return [self](int node, double) -> Eigen::VectorXd { return self->coeffs.col(node); };
    }
};

struct WindowDiag {
    int k = 0;
    int start_node = 0;
    int end_node = 0;
    int n_modes_steered = 0;
    double cost = 0.0;
    double condition = 0.0;
    double design_residual = 0.0;        // deterministic recursion residual
    double realized_residual_rel = 0.0;  // ||Pi_mu y(end)|| / max(||Pi_mu y(start)||, eps)
};

struct LrResult {
    ControlSignal control;
    Trajectory traj;
    double terminal_l2 = 0.0;
    std::vector<WindowDiag> windows;
};

// Per-path null control: on each active window, transform by the relative
// noise factor, steer the projected modes with the discrete Gramian, map back
// adapted as h(t) = E_rel(t) q(t); passive windows run the free dynamics.
inline LrResult lr_null_control(const LinearSpde& spde, const Eigen::VectorXd& y0,
                                const BrownianPath& path, const LRSchedule& sched) {
    if (!y0.allFinite()) throw std::invalid_argument("lr_null_control: nonfinite initial state");
    if (std::abs(sched.T - path.horizon()) > 1e-9 * sched.T)
        throw std::invalid_argument("lr_null_control: schedule horizon differs from path horizon");
    const SpectralGrid& grid = *spde.grid;
    const int n = grid.n_modes();
    const int n_nodes = path.n_nodes();
    const double dt = path.dt();
    const double a = spde.noise_coef;

    LrResult out;
    out.control.times.resize(n_nodes);
    for (int i = 0; i < n_nodes; ++i) out.control.times[i] = path.time(i);
    out.control.coeffs = Eigen::MatrixXd::Zero(n, n_nodes);

    out.traj.times = out.control.times;
    out.traj.states.resize(n, n_nodes);
    out.traj.states.col(0) = y0;

    Stepper stepper(spde, dt);
    Eigen::VectorXd y = y0;
    int node = 0;

    auto march_passive = [&](int until) {
        while (node < until) {
            y = stepper.step(y, nullptr, nullptr, nullptr, path.increment(node));
            ++node;
            out.traj.states.col(node) = y;
        }
    };

    for (int k = 0; k <= sched.k_max; ++k) {
        const int start = path.node_index(sched.a[k]);
        march_passive(start);
        int end = static_cast<int>(std::llround((sched.a[k] + sched.duration[k]) / dt));
        end = std::min(std::max(end, start + 1), path.n_steps());
        const int m = modes_below(grid, sched.mu[k]);
        WindowDiag diag;
        diag.k = k;
        diag.start_node = start;
        diag.end_node = end;
        diag.n_modes_steered = m;
        if (m == 0) {
            march_passive(end);
            out.windows.push_back(diag);
            continue;
        }
        const Eigen::VectorXd eigs = grid.eigenvalues().head(m);
        const Eigen::MatrixXd Bm = spde.control_to_modes.topLeftCorner(m, m);
        const Eigen::VectorXd x0 = y.head(m);
        const double start_norm = x0.norm();
        DiscreteSteering ds;
        try {
            ds = discrete_hum_control(x0, eigs, dt, end - start, Bm, k);
        } catch (ConditioningError&) {
            throw;  // window index already attached
        }
        diag.condition = ds.condition;

        // deterministic design residual of the projected recursion
        {
            Eigen::VectorXd x = x0;
            const Eigen::ArrayXd decay = (-dt * eigs.array()).exp();
            for (int i = 0; i < ds.n_steps; ++i)
                x = (decay * x.array()).matrix() + dt * (Bm * ds.q_at_step(i));
            diag.design_residual = x.norm();
        }

        const double t_start = path.time(start);
        const double w_start = path.value(start);
        while (node < end) {
            const int i_local = node - start;
            const double t = path.time(node);
            // adapted relative transform factor E(t)/E(a_k)
            const double E_rel = std::exp(a * (path.value(node) - w_start) -
                                          0.5 * a * a * (t - t_start));
            Eigen::VectorXd q = E_rel * ds.q_at_step(i_local);
            out.control.coeffs.col(node).head(m) = q;
            out.control.total_cost += dt * q.dot(Bm * q);
            const Eigen::VectorXd h = out.control.coeffs.col(node);
            y = stepper.step(y, &h, nullptr, nullptr, path.increment(node));
            ++node;
            out.traj.states.col(node) = y;
        }
        diag.realized_residual_rel =
            y.head(m).norm() / std::max(start_norm, 1e-30);
        diag.cost = ds.cost;
        out.control.active_windows.emplace_back(start, end);
        out.windows.push_back(diag);
    }
    march_passive(path.n_steps());
    out.terminal_l2 = sobolev_norm(y, grid, 0);
    return out;
}

// kappa(mu, tau): smallest constant with ||z(0)||^2 <= kappa * observation
// for every projected adjoint solution; the largest generalized eigenvalue of
// (e^{-2 Lambda tau}, G), attained by the corresponding eigenvector.
inline double observability_constant(const SpectralGrid& grid, double mu, double tau,
                                     const Eigen::MatrixXd& B_full) {
    const int m = modes_below(grid, mu);
    if (m == 0) throw std::invalid_argument("observability_constant: no modes below cutoff");
    const Eigen::VectorXd eigs = grid.eigenvalues().head(m);
    const Eigen::MatrixXd G = hum_gramian_from(eigs, tau, B_full.topLeftCorner(m, m));
    {
        GramianSolver check(G);  // surfaces conditioning failures with the estimate
        (void)check;
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) A(i, i) = std::exp(-2.0 * eigs[i] * tau);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(A, G);
    if (ges.info() != Eigen::Success)
        throw std::runtime_error("observability_constant: generalized eigensolve failed");
    return ges.eigenvalues().maxCoeff();
}

struct CostCurvePoint {
    double T = 0.0;
    int n_paths = 0;
    double cost_median = 0.0;
    double cost_q25 = 0.0;
    double cost_q75 = 0.0;
    double terminal_norm_median = 0.0;
};

struct CostFit {
    double c0 = 0.0;  // intercept of log cost ~ c0 + c1 / T
    double c1 = 0.0;
    double r_squared = 0.0;
    double M_cost = 0.0;
    std::vector<CostCurvePoint> points;
};

struct CostExperimentConfig {
    const SpectralGrid* grid = nullptr;
    Eigen::MatrixXd control_to_modes;
    double noise_coef = 0.0;
    double M_spec = 10.0;
    int k_max = 6;
    int steps = 2048;  // path steps per horizon
    std::uint64_t base_seed = 1;
    int init_modes = 8;  // initial data sampled on this many leading modes
};

// Unit-H1 random initial state on the leading modes, deterministic per seed.
inline Eigen::VectorXd sample_initial_state(const SpectralGrid& grid, std::uint64_t seed,
                                            int n_active_modes, double scale) {
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(grid.n_modes());
    const int m = std::min(n_active_modes, grid.n_modes());
    for (int k = 0; k < m; ++k)
        y0[k] = rng::gaussian(seed, rng::kStreamInitialData, static_cast<std::uint64_t>(k));
    const double h1 = sobolev_norm(y0, grid, 1);
    if (h1 > 0.0) y0 *= scale / h1;
    return y0;
}

// Sweep horizons, run the scheduler per path, and fit log(median cost)
// against 1/T; also reports the implied cost constant for the weight family.
inline CostFit estimate_cost_constant(const std::vector<double>& T_list, int n_paths,
                                      const CostExperimentConfig& cfg) {
    if (T_list.size() < 3)
        throw std::invalid_argument("estimate_cost_constant: need at least 3 horizons");
    for (double T : T_list)
        if (!(T > 0.0 && T <= 1.0))
            throw std::invalid_argument("estimate_cost_constant: horizons must lie in (0, 1]");
    LinearSpde spde{cfg.grid, cfg.control_to_modes, cfg.noise_coef};
    CostFit fit;
    std::vector<double> xs, ys;
    for (double T : T_list) {
        const LRSchedule sched = build_lr_schedule(T, cfg.M_spec, cfg.k_max);
        std::vector<double> costs, terminals;
        for (int p = 0; p < n_paths; ++p) {
            const std::uint64_t seed = rng::derive_seed(cfg.base_seed, p);
            const BrownianPath path = BrownianPath::sample(seed, T / cfg.steps, T);
            const Eigen::VectorXd y0 = sample_initial_state(*cfg.grid, seed, cfg.init_modes, 1.0);
            const LrResult run = lr_null_control(spde, y0, path, sched);
            costs.push_back(run.control.total_cost);
            terminals.push_back(run.terminal_l2);
        }
        CostCurvePoint pt;
        pt.T = T;
        pt.n_paths = n_paths;
        pt.cost_median = median(costs);
        pt.cost_q25 = quantile(costs, 0.25);
        pt.cost_q75 = quantile(costs, 0.75);
        pt.terminal_norm_median = median(terminals);
        fit.points.push_back(pt);
        xs.push_back(1.0 / T);
        ys.push_back(std::log(pt.cost_median));
    }
    const AffineFit af = fit_affine(xs, ys);
    fit.c0 = af.intercept;
    fit.c1 = af.slope;
    fit.r_squared = af.r_squared;
    fit.M_cost = std::max(std::exp(af.intercept), af.slope);
    return fit;
}

}  // namespace snc

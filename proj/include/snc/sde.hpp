// Pathwise time stepping of the forward linear SPDE in mode coordinates,
// plus the exact-transform oracle used for verification.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "snc/brownian.hpp"
#include "snc/spectral.hpp"

namespace snc {

// Time-node-indexed source: returns mode coefficients at a path node.
// An empty function means identically zero.
using NodeFn = std::function<Eigen::VectorXd(int node, double t)>;

// dy = (Delta y + chi_{D0} h + F) dt + (a y + G) dW in the sine basis.
// control_to_modes maps restricted-basis control coefficients to mode loads
// (the control-region mass matrix).
struct LinearSpde {
    const SpectralGrid* grid = nullptr;
    Eigen::MatrixXd control_to_modes;
    double noise_coef = 0.0;

    int n_modes() const { return grid->n_modes(); }
};

struct Trajectory {
    std::vector<double> times;
    Eigen::MatrixXd states;  // n_modes x n_nodes, column i is y(times[i])

    int n_nodes() const { return static_cast<int>(times.size()); }
    Eigen::VectorXd state(int i) const { return states.col(i); }
    double time(int i) const { return times.at(i); }
    Eigen::VectorXd terminal() const { return states.col(states.cols() - 1); }
};

// One exponential-Euler step at fixed dt. The linear multiplicative part is
// applied as an exact geometric factor; sources use the left endpoint (Ito).
class Stepper {
public:
    Stepper(const LinearSpde& spde, double dt) : spde_(&spde), dt_(dt) {
        if (!(dt > 0.0)) throw std::invalid_argument("Stepper: dt must be positive");
        mode_decay_ = (-dt * spde.grid->eigenvalues().array()).exp();
    }

    // y <- exp((-lambda - a^2/2) dt + a dW) * y + dt (B h + F) + dW G
    Eigen::VectorXd step(const Eigen::VectorXd& y, const Eigen::VectorXd* h,
                         const Eigen::VectorXd* F, const Eigen::VectorXd* G, double dW) const {
        const double a = spde_->noise_coef;
        const double factor = std::exp(-0.5 * a * a * dt_ + a * dW);
        Eigen::VectorXd out = (mode_decay_ * y.array()).matrix() * factor;
        if (h) out.noalias() += dt_ * (spde_->control_to_modes * (*h));
        if (F) out += dt_ * (*F);
        if (G) out += dW * (*G);
        if (!out.allFinite()) throw std::runtime_error("Stepper: nonfinite state");
        return out;
    }

    double dt() const { return dt_; }

private:
    const LinearSpde* spde_;
    double dt_;
    Eigen::ArrayXd mode_decay_;
};

inline Eigen::VectorXd step_linear(const LinearSpde& spde, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd* h, const Eigen::VectorXd* F,
                                   const Eigen::VectorXd* G, double dW, double dt) {
    if (!y.allFinite()) throw std::invalid_argument("step_linear: nonfinite state");
    return Stepper(spde, dt).step(y, h, F, G, dW);
}

namespace detail {
inline std::pair<int, int> window_nodes(const BrownianPath& path, double t0, double t1) {
    if (t0 < -1e-12 || t1 > path.horizon() * (1.0 + 1e-12) || !(t0 < t1))
        throw std::invalid_argument("solve window outside path horizon");
    const int i0 = path.node_index(t0);
    const int i1 = path.node_index(t1);
    if (i1 <= i0) throw std::invalid_argument("solve window has no steps");
    return {i0, i1};
}
}  // namespace detail

// March the stepper over every path node in [t0, t1]. Adapted by
// construction: step i uses only W up to node i+1 and sources at node i.
inline Trajectory solve_linear(const LinearSpde& spde, const Eigen::VectorXd& y0,
                               const NodeFn& control, const NodeFn& F, const NodeFn& G,
                               const BrownianPath& path, double t0, double t1) {
    if (!y0.allFinite()) throw std::invalid_argument("solve_linear: nonfinite initial state");
    const auto [i0, i1] = detail::window_nodes(path, t0, t1);
    Stepper stepper(spde, path.dt());
    Trajectory traj;
    traj.times.resize(i1 - i0 + 1);
    traj.states.resize(y0.size(), i1 - i0 + 1);
    Eigen::VectorXd y = y0;
    traj.times[0] = path.time(i0);
    traj.states.col(0) = y;
    for (int i = i0; i < i1; ++i) {
        const double t = path.time(i);
        Eigen::VectorXd hv, Fv, Gv;
        const Eigen::VectorXd* hp = nullptr;
        const Eigen::VectorXd* Fp = nullptr;
        const Eigen::VectorXd* Gp = nullptr;
        if (control) { hv = control(i, t); hp = &hv; }
        if (F) { Fv = F(i, t); Fp = &Fv; }
        if (G) { Gv = G(i, t); Gp = &Gv; }
        y = stepper.step(y, hp, Fp, Gp, path.increment(i));
        traj.times[i - i0 + 1] = path.time(i + 1);
        traj.states.col(i - i0 + 1) = y;
    }
    return traj;
}

// Exact-transform oracle for G == 0: the change of variable w = E(t)^{-1} y
// removes the noise, leaving a deterministic variation-of-constants problem
// integrated by trapezoid quadrature on the path grid.
inline Trajectory oracle_transform_solution(const LinearSpde& spde, const Eigen::VectorXd& y0,
                                            const NodeFn& control, const NodeFn& F,
                                            const BrownianPath& path, double t0, double t1) {
    if (!y0.allFinite()) throw std::invalid_argument("oracle: nonfinite initial state");
    const auto [i0, i1] = detail::window_nodes(path, t0, t1);
    const double a = spde.noise_coef;
    const double dt = path.dt();
    const int n = static_cast<int>(y0.size());
    const Eigen::ArrayXd decay = (-dt * spde.grid->eigenvalues().array()).exp();

    auto transformed_source = [&](int i) -> Eigen::VectorXd {
        const double t = path.time(i);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        if (control) c.noalias() += spde.control_to_modes * control(i, t);
        if (F) c += F(i, t);
        if (c.isZero(0.0)) return c;
        // E_rel(t)^{-1} relative to the window start
        const double w_rel = path.value(i) - path.value(i0);
        const double inv = std::exp(-a * w_rel + 0.5 * a * a * (t - path.time(i0)));
        return inv * c;
    };

    Trajectory traj;
    traj.times.resize(i1 - i0 + 1);
    traj.states.resize(n, i1 - i0 + 1);
    Eigen::VectorXd w = y0;  // transformed state
    traj.times[0] = path.time(i0);
    traj.states.col(0) = y0;
    Eigen::VectorXd c_prev = transformed_source(i0);
    for (int i = i0; i < i1; ++i) {
        Eigen::VectorXd c_next = transformed_source(i + 1);
        w = (decay * w.array()).matrix() + 0.5 * dt * ((decay * c_prev.array()).matrix() + c_next);
        c_prev = std::move(c_next);
        const int col = i - i0 + 1;
        const double t = path.time(i + 1);
        const double w_rel = path.value(i + 1) - path.value(i0);
        const double E_rel = std::exp(a * w_rel - 0.5 * a * a * (t - path.time(i0)));
        traj.times[col] = t;
        traj.states.col(col) = E_rel * w;
    }
    return traj;
}

// Per-node Sobolev norms of a trajectory.
inline Eigen::VectorXd norm_series(const Trajectory& traj, const SpectralGrid& grid, int order) {
    Eigen::VectorXd out(traj.n_nodes());
    for (int i = 0; i < traj.n_nodes(); ++i) out[i] = sobolev_norm(traj.states.col(i), grid, order);
    return out;
}

}  // namespace snc

// Weight family for the source-term method: gamma, rho0, rho, rho_hat, the
// geometric block schedule, and parameter validation.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace snc {

// Parameters (s, Q, P, zeta, M_cost, T). Valid when
//   Q in (1, 2^{1/s}),  P > Q^s/(2 - Q^s),  (1+P) Q^s / 2 < zeta < P.
struct WeightParams {
    double s = 2.0;
    double Q = 1.2;
    double P = 3.0;
    double zeta = 2.9;
    double M_cost = 5.0;
    double T = 1.0;

    double Qs() const { return std::pow(Q, s); }
    double b() const { return std::pow(Q, s / 2.0); }  // Q^{s/2}, the schedule ratio
};

// Reports every violated constraint; empty result means valid.
inline std::vector<std::string> validate(const WeightParams& w) {
    std::vector<std::string> bad;
    if (!(w.s > 1.0)) bad.push_back("s must satisfy s > 1");
    if (!(w.T > 0.0)) bad.push_back("T must be positive");
    if (!(w.M_cost > 0.0)) bad.push_back("M_cost must be positive");
    if (!(w.Q > 1.0 && w.Q < std::pow(2.0, 1.0 / w.s)))
        bad.push_back("Q must lie in (1, 2^{1/s})");
    const double qs = w.Qs();
    if (qs < 2.0) {
        if (!(w.P > qs / (2.0 - qs))) bad.push_back("P must exceed Q^s/(2-Q^s)");
    } else {
        bad.push_back("Q^s must be < 2 for the P constraint to be satisfiable");
    }
    if (!((1.0 + w.P) * qs / 2.0 < w.zeta && w.zeta < w.P))
        bad.push_back("zeta must lie in ((1+P)Q^s/2, P)");
    return bad;
}

inline void require_valid(const WeightParams& w) {
    auto bad = validate(w);
    if (!bad.empty()) {
        std::string msg = "WeightParams invalid:";
        for (const auto& b : bad) msg += " [" + b + "]";
        throw std::invalid_argument(msg);
    }
}

// Values below this clamp to exact zero; trajectories weighted by these
// functions reach exact zero with them, which keeps ratios well defined.
constexpr double kWeightFloor = 1e-300;

inline double clamp_weight(double v) { return v < kWeightFloor ? 0.0 : v; }

namespace detail {
inline void check_time_open(double t, double T, const char* who) {
    if (!(t >= 0.0 && t < T))
        throw std::invalid_argument(std::string(who) + ": t must lie in [0, T)");
}
}  // namespace detail

// gamma(t) = M e^{M/t}, t > 0: the control-cost envelope.
inline double gamma_weight(double t, double M_cost) {
    if (!(t > 0.0)) throw std::invalid_argument("gamma_weight: t must be positive");
    return M_cost * std::exp(M_cost / t);
}

inline double log_gamma_weight(double t, double M_cost) {
    if (!(t > 0.0)) throw std::invalid_argument("log_gamma_weight: t must be positive");
    return std::log(M_cost) + M_cost / t;
}

// Time-to-horizon forms, u = T - t. Evaluating through u avoids the T - t
// cancellation when u is known in closed form (schedule nodes).
inline double log_rho0_ttg(double u, const WeightParams& w) {
    if (!(u > 0.0)) throw std::invalid_argument("rho0: t must lie in [0, T)");
    return -w.P * std::log(w.M_cost) - w.M_cost * w.P / ((w.b() - 1.0) * u);
}

inline double log_rho_ttg(double u, const WeightParams& w) {
    if (!(u > 0.0)) throw std::invalid_argument("rho: t must lie in [0, T)");
    return -(1.0 + w.P) * std::log(w.M_cost) -
           (1.0 + w.P) * w.Qs() * w.M_cost / ((w.b() - 1.0) * u);
}

inline double log_rho_hat_ttg(double u, const WeightParams& w) {
    if (!(u > 0.0)) throw std::invalid_argument("rho_hat: t must lie in [0, T)");
    return -w.M_cost * w.zeta / ((w.b() - 1.0) * u);
}

// log rho0(t) = -P log M - M P / ((Q^{s/2}-1)(T-t))
inline double log_rho0(double t, const WeightParams& w) {
    detail::check_time_open(t, w.T, "rho0");
    return log_rho0_ttg(w.T - t, w);
}

// log rho(t) = -(1+P) log M - (1+P) Q^s M / ((Q^{s/2}-1)(T-t))
inline double log_rho(double t, const WeightParams& w) {
    detail::check_time_open(t, w.T, "rho");
    return log_rho_ttg(w.T - t, w);
}

// log rho_hat(t) = -M zeta / ((Q^{s/2}-1)(T-t)); prefactor fixed to 1.
inline double log_rho_hat(double t, const WeightParams& w) {
    detail::check_time_open(t, w.T, "rho_hat");
    return log_rho_hat_ttg(w.T - t, w);
}

inline double rho0_ttg(double u, const WeightParams& w) { return clamp_weight(std::exp(log_rho0_ttg(u, w))); }
inline double rho_ttg(double u, const WeightParams& w) { return clamp_weight(std::exp(log_rho_ttg(u, w))); }

inline double rho0(double t, const WeightParams& w) { return clamp_weight(std::exp(log_rho0(t, w))); }
inline double rho(double t, const WeightParams& w) { return clamp_weight(std::exp(log_rho(t, w))); }
inline double rho_hat(double t, const WeightParams& w) { return clamp_weight(std::exp(log_rho_hat(t, w))); }

// Divisions by rho_hat are only performed for t <= T - t_guard.
inline double t_guard(const WeightParams& w) { return w.T / 1024.0; }

// x / rho_hat(t) evaluated in log-magnitude space so that near-zero weights
// are never divided by directly. Exact zeros map to exact zeros; a genuinely
// exploding ratio saturates to +/-inf.
inline double over_rho_hat(double x, double t, const WeightParams& w) {
    if (x == 0.0) return 0.0;
    const double e = std::log(std::abs(x)) - log_rho_hat(t, w);
    if (e > 709.0) return x > 0.0 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
    return std::copysign(std::exp(e), x);
}

// Same log-space guard for x / rho0(t).
inline double over_rho0(double x, double t, const WeightParams& w) {
    if (x == 0.0) return 0.0;
    const double e = std::log(std::abs(x)) - log_rho0(t, w);
    if (e > 709.0) return x > 0.0 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
    return std::copysign(std::exp(e), x);
}

// And for x / rho(t).
inline double over_rho(double x, double t, const WeightParams& w) {
    if (x == 0.0) return 0.0;
    const double e = std::log(std::abs(x)) - log_rho(t, w);
    if (e > 709.0) return x > 0.0 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
    return std::copysign(std::exp(e), x);
}

inline Eigen::VectorXd over_rho_hat(const Eigen::VectorXd& x, double t, const WeightParams& w) {
    Eigen::VectorXd out(x.size());
    for (int i = 0; i < x.size(); ++i) out[i] = over_rho_hat(x[i], t, w);
    return out;
}

inline Eigen::VectorXd over_rho0(const Eigen::VectorXd& x, double t, const WeightParams& w) {
    Eigen::VectorXd out(x.size());
    for (int i = 0; i < x.size(); ++i) out[i] = over_rho0(x[i], t, w);
    return out;
}

inline Eigen::VectorXd over_rho(const Eigen::VectorXd& x, double t, const WeightParams& w) {
    Eigen::VectorXd out(x.size());
    for (int i = 0; i < x.size(); ++i) out[i] = over_rho(x[i], t, w);
    return out;
}

// Source-method time grid T_k = T - T / Q^{k s / 2}: strictly increasing,
// T_0 = 0, T_k -> T.
inline std::vector<double> source_schedule(double T, double Q, double s, int k_max) {
    if (!(T > 0.0) || !(Q > 1.0) || !(s > 1.0) || k_max < 1)
        throw std::invalid_argument("source_schedule: invalid parameters");
    std::vector<double> times(k_max + 1);
    const double b = std::pow(Q, s / 2.0);
    for (int k = 0; k <= k_max; ++k) times[k] = T - T / std::pow(b, k);
    return times;
}

inline std::vector<double> source_schedule(const WeightParams& w, int k_max) {
    return source_schedule(w.T, w.Q, w.s, k_max);
}

}  // namespace snc

// Dirichlet sine eigenbasis on an interval: grid/mode transforms, Sobolev
// norms, and the control-region mass matrix.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace snc {

// Interior nodes of a uniform grid on (0, L) plus the first n_modes Dirichlet
// eigenpairs. The synthesis/analysis matrices realize an exact discrete sine
// transform pair: analyze(synthesize(c)) == c for any c of length n_modes.
class SpectralGrid {
public:
    SpectralGrid(double length, int n_modes, int n_grid)
        : length_(length), n_modes_(n_modes), n_grid_(n_grid) {
        if (length <= 0.0) throw std::invalid_argument("SpectralGrid: length must be positive");
        if (n_modes < 1) throw std::invalid_argument("SpectralGrid: n_modes must be >= 1");
        if (n_grid < 2 * n_modes)
            throw std::invalid_argument("SpectralGrid: n_grid must be >= 2*n_modes (dealiasing headroom)");
        const double h = length / (n_grid + 1);
        eigenvalues_.resize(n_modes);
        for (int k = 1; k <= n_modes; ++k) {
            const double w = k * M_PI / length;
            eigenvalues_[k - 1] = w * w;
        }
        nodes_.resize(n_grid);
        for (int j = 0; j < n_grid; ++j) nodes_[j] = (j + 1) * h;
        const double amp = std::sqrt(2.0 / length);
        synth_.resize(n_grid, n_modes);
        deriv_.resize(n_grid, n_modes);
        for (int k = 1; k <= n_modes; ++k) {
            const double w = k * M_PI / length;
            for (int j = 0; j < n_grid; ++j) {
                synth_(j, k - 1) = amp * std::sin(w * nodes_[j]);
                deriv_(j, k - 1) = amp * w * std::cos(w * nodes_[j]);
            }
        }
        // h * synth^T * synth == I by discrete sine orthogonality.
        analyze_ = h * synth_.transpose();
    }

    static SpectralGrid standard() { return SpectralGrid(1.0, 64, 256); }

    double length() const { return length_; }
    int n_modes() const { return n_modes_; }
    int n_grid() const { return n_grid_; }
    double node_spacing() const { return length_ / (n_grid_ + 1); }
    const Eigen::VectorXd& nodes() const { return nodes_; }
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
    const Eigen::MatrixXd& synthesis_matrix() const { return synth_; }
    const Eigen::MatrixXd& derivative_matrix() const { return deriv_; }

    // 1-based mode index, matching the analytic numbering lambda_k = (k pi/L)^2.
    double eigenvalue(int k) const {
        if (k < 1 || k > n_modes_)
            throw std::out_of_range("SpectralGrid::eigenvalue: mode index " + std::to_string(k) +
                                    " outside [1," + std::to_string(n_modes_) + "]");
        return eigenvalues_[k - 1];
    }

    Eigen::VectorXd synthesize(const Eigen::VectorXd& coefficients) const {
        if (coefficients.size() != n_modes_)
            throw std::invalid_argument("synthesize: coefficient length mismatch");
        return synth_ * coefficients;
    }

    Eigen::VectorXd analyze(const Eigen::VectorXd& values) const {
        if (values.size() != n_grid_)
            throw std::invalid_argument("analyze: grid length mismatch");
        return analyze_ * values;
    }

private:
    double length_;
    int n_modes_;
    int n_grid_;
    Eigen::VectorXd eigenvalues_;
    Eigen::VectorXd nodes_;
    Eigen::MatrixXd synth_;
    Eigen::MatrixXd deriv_;
    Eigen::MatrixXd analyze_;
};

// Coefficient vector of the solution in the sine basis at one instant.
struct ModeState {
    Eigen::VectorXd coefficients;
    double time_tag = 0.0;
};

// Nonempty open control subinterval (a0, b0) of (0, L).
struct ControlRegion {
    double a0 = 0.3;
    double b0 = 0.8;

    void check(double length) const {
        if (!(0.0 < a0 && a0 < b0 && b0 < length))
            throw std::invalid_argument("ControlRegion: need 0 < a0 < b0 < L");
    }
};

inline Eigen::VectorXd synthesize(const ModeState& state, const SpectralGrid& grid) {
    return grid.synthesize(state.coefficients);
}

inline ModeState analyze(const Eigen::VectorXd& values, const SpectralGrid& grid, double time_tag = 0.0) {
    return ModeState{grid.analyze(values), time_tag};
}

// (sum_k lambda_k^order y_k^2)^{1/2}; order 0 = L2, 1 = H1_0, 2 = H2 via ||Laplacian y||.
inline double sobolev_norm(const Eigen::VectorXd& coefficients, const SpectralGrid& grid, int order) {
    if (order < 0 || order > 2) throw std::invalid_argument("sobolev_norm: order must be 0, 1 or 2");
    if (coefficients.size() > grid.n_modes())
        throw std::invalid_argument("sobolev_norm: state longer than grid modes");
    double acc = 0.0;
    for (int i = 0; i < coefficients.size(); ++i) {
        double w = 1.0;
        const double lam = grid.eigenvalues()[i];
        if (order == 1) w = lam;
        if (order == 2) w = lam * lam;
        acc += w * coefficients[i] * coefficients[i];
    }
    return std::sqrt(acc);
}

inline double sobolev_norm(const ModeState& state, const SpectralGrid& grid, int order) {
    return sobolev_norm(state.coefficients, grid, order);
}

// Spectral H^{-1} norm, (sum lambda_k^{-1} F_k^2)^{1/2}; used by the energy
// estimate checks.
inline double h_minus1_norm(const Eigen::VectorXd& coefficients, const SpectralGrid& grid) {
    double acc = 0.0;
    for (int i = 0; i < coefficients.size(); ++i)
        acc += coefficients[i] * coefficients[i] / grid.eigenvalues()[i];
    return std::sqrt(acc);
}

// B_{kj} = int_{D0} phi_k phi_j dx via closed-form antiderivatives.
// Symmetric positive semidefinite; identity when D0 = (0, L).
inline Eigen::MatrixXd control_mass_matrix(const ControlRegion& region, const SpectralGrid& grid, int m) {
    region.check(grid.length());
    if (m < 1 || m > grid.n_modes())
        throw std::invalid_argument("control_mass_matrix: size must be in [1, n_modes]");
    const double L = grid.length();
    auto sinc_term = [&](int n, double x) {
        // antiderivative of cos(n pi x / L): L sin(n pi x / L) / (n pi), n != 0
        return L * std::sin(n * M_PI * x / L) / (n * M_PI);
    };
    Eigen::MatrixXd B(m, m);
    for (int k = 1; k <= m; ++k) {
        for (int j = k; j <= m; ++j) {
            double val;
            if (k == j) {
                val = (region.b0 - region.a0) / L -
                      (sinc_term(2 * k, region.b0) - sinc_term(2 * k, region.a0)) / L;
            } else {
                val = (sinc_term(k - j, region.b0) - sinc_term(k - j, region.a0)) / L -
                      (sinc_term(k + j, region.b0) - sinc_term(k + j, region.a0)) / L;
            }
            B(k - 1, j - 1) = val;
            B(j - 1, k - 1) = val;
        }
    }
    return B;
}

// Zero all coefficients with lambda_k > mu (orthogonal projection onto E_mu).
inline ModeState project_low(const ModeState& state, const SpectralGrid& grid, double mu) {
    if (mu <= 0.0) throw std::invalid_argument("project_low: mu must be positive");
    ModeState out = state;
    for (int i = 0; i < out.coefficients.size(); ++i)
        if (grid.eigenvalues()[i] > mu) out.coefficients[i] = 0.0;
    return out;
}

// Number of leading modes with lambda_k <= mu.
inline int modes_below(const SpectralGrid& grid, double mu) {
    int m = 0;
    while (m < grid.n_modes() && grid.eigenvalues()[m] <= mu) ++m;
    return m;
}

}  // namespace snc

// Reproducible Brownian paths: counter-based sampling, bridge refinement,
// the exponential noise-transform factor, and binary replay dumps.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace snc {

namespace rng {

// splitmix64 finalizer; full-avalanche 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based word: a pure function of (seed, stream, counter), so draws are
// order-independent and safe to evaluate from any number of workers.
inline std::uint64_t word(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

inline double to_unit_open(std::uint64_t w) {  // (0, 1]
    return (static_cast<double>(w >> 11) + 1.0) * 0x1.0p-53;
}

inline double to_unit_half(std::uint64_t w) {  // [0, 1)
    return static_cast<double>(w >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two counter-based uniforms.
inline double gaussian(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const double u1 = to_unit_open(word(seed, stream, 2 * index));
    const double u2 = to_unit_half(word(seed, stream, 2 * index + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Stream tags keep independent uses of the same seed decorrelated.
constexpr std::uint64_t kStreamIncrements = 0x77eed9d1a9cb55a1ULL;
constexpr std::uint64_t kStreamBridgeBase = 0x2f3c8d1b64097e25ULL;
constexpr std::uint64_t kStreamInitialData = 0x51a0b3e6dd24c9f3ULL;

// Derive an ensemble-member seed from (base seed, path index).
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t path_index) {
    return mix64(mix64(base_seed) ^ (path_index + 0x632be59bd9b4e019ULL));
}

}  // namespace rng

// Discretized Wiener path, a deterministic function of (seed, dt, T).
// values[i] = W(i*dt), values[0] = 0.
class BrownianPath {
public:
    static BrownianPath sample(std::uint64_t seed, double dt, double horizon) {
        check_grid(dt, horizon);
        const int n = static_cast<int>(std::llround(horizon / dt));
        BrownianPath p;
        p.seed_ = seed;
        p.dt_ = dt;
        p.horizon_ = horizon;
        p.increments_.resize(n);
        p.values_.resize(n + 1);
        p.values_[0] = 0.0;
        const double sd = std::sqrt(dt);
        for (int i = 0; i < n; ++i) {
            p.increments_[i] = sd * rng::gaussian(seed, rng::kStreamIncrements, i);
            p.values_[i + 1] = p.values_[i] + p.increments_[i];
        }
        return p;
    }

    // Replay/testing constructor from explicit increments.
    static BrownianPath from_increments(std::uint64_t seed, double dt, double horizon,
                                        std::vector<double> increments) {
        check_grid(dt, horizon);
        const int n = static_cast<int>(std::llround(horizon / dt));
        if (static_cast<int>(increments.size()) != n)
            throw std::invalid_argument("BrownianPath::from_increments: length mismatch");
        BrownianPath p;
        p.seed_ = seed;
        p.dt_ = dt;
        p.horizon_ = horizon;
        p.increments_ = std::move(increments);
        p.values_.resize(n + 1);
        p.values_[0] = 0.0;
        for (int i = 0; i < n; ++i) p.values_[i + 1] = p.values_[i] + p.increments_[i];
        return p;
    }

    // Brownian-bridge refinement by a power-of-two factor. Coarse-node values
    // are kept verbatim, so subsampling recovers them exactly.
    BrownianPath refine(int factor) const {
        if (factor < 2 || (factor & (factor - 1)) != 0)
            throw std::invalid_argument("BrownianPath::refine: factor must be a power of two >= 2");
        BrownianPath out = *this;
        int f = factor;
        while (f > 1) {
            out = out.halve();
            f /= 2;
        }
        return out;
    }

    std::uint64_t seed() const { return seed_; }
    double dt() const { return dt_; }
    double horizon() const { return horizon_; }
    int refinement_level() const { return level_; }
    int n_steps() const { return static_cast<int>(increments_.size()); }
    int n_nodes() const { return static_cast<int>(values_.size()); }
    const std::vector<double>& increments() const { return increments_; }
    const std::vector<double>& values() const { return values_; }
    double time(int node) const { return node * dt_; }
    double value(int node) const { return values_.at(node); }
    double increment(int step) const { return increments_.at(step); }

    int node_index(double t) const {
        const double x = t / dt_;
        const int i = static_cast<int>(std::llround(x));
        if (i < 0 || i >= n_nodes() || std::abs(x - i) > 1e-9 * (1.0 + std::abs(x)))
            throw std::invalid_argument("BrownianPath: time " + std::to_string(t) + " is not a path node");
        return i;
    }

    // E(t) = exp(a W(t) - a^2 t / 2): the exact per-mode multiplicative-noise
    // factor; a positive martingale with E(0) = 1.
    double exp_factor(double a, int node) const {
        return std::exp(a * values_.at(node) - 0.5 * a * a * time(node));
    }
    double exp_factor_at(double a, double t) const { return exp_factor(a, node_index(t)); }

    // Little-endian binary dump: header (seed u64, dt f64, T f64), payload
    // increments f64. Matches the replay interface consumed downstream.
    void write_binary(const std::string& filename) const {
        std::ofstream os(filename, std::ios::binary);
        if (!os) throw std::runtime_error("BrownianPath::write_binary: cannot open " + filename);
        auto put = [&os](const void* p, std::size_t n) { os.write(static_cast<const char*>(p), n); };
        put(&seed_, 8);
        put(&dt_, 8);
        put(&horizon_, 8);
        put(increments_.data(), increments_.size() * 8);
        if (!os) throw std::runtime_error("BrownianPath::write_binary: write failed");
    }

    static BrownianPath read_binary(const std::string& filename) {
        std::ifstream is(filename, std::ios::binary);
        if (!is) throw std::runtime_error("BrownianPath::read_binary: cannot open " + filename);
        std::uint64_t seed = 0;
        double dt = 0.0, horizon = 0.0;
        is.read(reinterpret_cast<char*>(&seed), 8);
        is.read(reinterpret_cast<char*>(&dt), 8);
        is.read(reinterpret_cast<char*>(&horizon), 8);
        if (!is) throw std::runtime_error("BrownianPath::read_binary: truncated header");
        check_grid(dt, horizon);
        const int n = static_cast<int>(std::llround(horizon / dt));
        std::vector<double> inc(n);
        is.read(reinterpret_cast<char*>(inc.data()), n * 8);
        if (!is) throw std::runtime_error("BrownianPath::read_binary: truncated payload");
        return from_increments(seed, dt, horizon, std::move(inc));
    }

private:
    static void check_grid(double dt, double horizon) {
        if (dt <= 0.0 || horizon <= 0.0)
            throw std::invalid_argument("BrownianPath: dt and horizon must be positive");
        const double ratio = horizon / dt;
        if (std::abs(ratio - std::llround(ratio)) > 1e-9 * (1.0 + ratio))
            throw std::invalid_argument("BrownianPath: dt must divide the horizon");
        if (std::llround(ratio) < 1)
            throw std::invalid_argument("BrownianPath: need at least one step");
    }

    BrownianPath halve() const {
        BrownianPath p;
        p.seed_ = seed_;
        p.dt_ = dt_ / 2.0;
        p.horizon_ = horizon_;
        p.level_ = level_ + 1;
        const int n = n_steps();
        p.values_.resize(2 * n + 1);
        const double sd = std::sqrt(dt_ / 4.0);
        for (int i = 0; i < n; ++i) {
            const double mid = 0.5 * (values_[i] + values_[i + 1]) +
                               sd * rng::gaussian(seed_, rng::kStreamBridgeBase + p.level_, i);
            p.values_[2 * i] = values_[i];
            p.values_[2 * i + 1] = mid;
        }
        p.values_[2 * n] = values_[n];
        p.increments_.resize(2 * n);
        for (int i = 0; i < 2 * n; ++i) p.increments_[i] = p.values_[i + 1] - p.values_[i];
        return p;
    }

    std::uint64_t seed_ = 0;
    double dt_ = 0.0;
    double horizon_ = 0.0;
    int level_ = 0;
    std::vector<double> increments_;
    std::vector<double> values_;
};

}  // namespace snc

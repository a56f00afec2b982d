#pragma once

// Classical noise trajectories driving the stochastic Schroedinger equation:
// white noise, Ornstein-Uhlenbeck sampled with its exact Gaussian transition
// kernel, and a hook for externally supplied processes. Also the closed-form
// OU moments used as test oracles throughout the suite.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/parallel.hpp"
#include "fvqoc/rng.hpp"

namespace fvqoc {

enum class NoiseKind { white, ou, external };
enum class NoiseInit { calibrated, stationary };

// Sampled trajectory of one noise process on a uniform grid. x has steps+1
// values; dw are the driving standard Wiener increments (variance dt) and
// dqv the quadratic-variation increments gamma^2*dt of the diffusion part.
struct NoisePath {
    double dt = 0.0;
    int steps = 0;
    std::vector<double> x;
    std::vector<double> dw;
    std::vector<double> dqv;
    std::uint64_t seed = 0;
};

struct NoiseSpec {
    NoiseKind kind = NoiseKind::white;
    double gamma = 0.0;  // diffusion strength
    double k = 0.0;      // OU mean reversion (ignored for white)
    NoiseInit init = NoiseInit::calibrated;
    // Registered sampler for kind==external.
    std::function<NoisePath(const NoiseSpec&, double, int, std::uint64_t)> external_sampler;

    static NoiseSpec white_noise(double gamma) {
        NoiseSpec s;
        s.kind = NoiseKind::white;
        s.gamma = gamma;
        return s;
    }
    static NoiseSpec ou(double gamma, double k,
                        NoiseInit init = NoiseInit::calibrated) {
        NoiseSpec s;
        s.kind = NoiseKind::ou;
        s.gamma = gamma;
        s.k = k;
        s.init = init;
        return s;
    }
};

// k below this is treated as the white-noise limit everywhere.
constexpr double kWhiteLimit = 1e-300;

inline NoisePath sample_path(const NoiseSpec& spec, double dt, int steps,
                             std::uint64_t seed) {
    if (dt <= 0.0 || steps < 1) throw ConfigError("sample_path: need dt > 0 and steps >= 1");
    if (spec.kind == NoiseKind::external) {
        if (!spec.external_sampler)
            throw ConfigError("sample_path: external noise kind without a registered sampler");
        return spec.external_sampler(spec, dt, steps, seed);
    }
    const bool as_white = (spec.kind == NoiseKind::white) || spec.k <= kWhiteLimit;
    if (spec.kind == NoiseKind::ou && spec.k < 0.0)
        throw ConfigError("sample_path: OU mean reversion k must be >= 0");

    NoisePath path;
    path.dt = dt;
    path.steps = steps;
    path.seed = seed;
    path.x.resize(steps + 1);
    path.dw.resize(steps);
    path.dqv.assign(steps, spec.gamma * spec.gamma * dt);

    Rng rng(seed);
    double x0 = 0.0;
    if (spec.init == NoiseInit::stationary) {
        if (as_white)
            throw ConfigError("sample_path: stationary initial data requires k > 0");
        x0 = spec.gamma / std::sqrt(2.0 * spec.k) * rng.normal();
    }
    path.x[0] = x0;

    const double sqdt = std::sqrt(dt);
    if (as_white) {
        for (int i = 0; i < steps; ++i) {
            const double n = rng.normal();
            path.dw[i] = sqdt * n;
            path.x[i + 1] = path.x[i] + spec.gamma * path.dw[i];
        }
    } else {
        // Exact transition kernel; the same normal is recorded as the
        // consistent driving Wiener increment.
        const double decay = std::exp(-spec.k * dt);
        const double sd = spec.gamma * std::sqrt((1.0 - decay * decay) / (2.0 * spec.k));
        for (int i = 0; i < steps; ++i) {
            const double n = rng.normal();
            path.dw[i] = sqdt * n;
            path.x[i + 1] = path.x[i] * decay + sd * n;
        }
    }
    return path;
}

inline double double_factorial_odd(int n) {
    // (2n-1)!! with the empty product equal to 1.
    double r = 1.0;
    for (int i = 2 * n - 1; i >= 1; i -= 2) r *= i;
    return r;
}

// E[X_t^{2n}] for calibrated initial data X_0 = 0:
//   Gamma(n + 1/2)/sqrt(pi) * (2 gamma^2/k * e^{-kt} sinh(kt))^n,
// with the k -> 0 limit (2n-1)!! (gamma^2 t)^n.
inline double ou_even_moment(int n, double t, double k, double gamma) {
    if (n < 0) throw ConfigError("ou_even_moment: n must be >= 0");
    if (t < 0.0) throw ConfigError("ou_even_moment: t must be >= 0");
    if (n == 0) return 1.0;
    if (k <= kWhiteLimit)
        return double_factorial_odd(n) * std::pow(gamma * gamma * t, n);
    const double base = 2.0 * gamma * gamma / k * std::exp(-k * t) * std::sinh(k * t);
    const double coeff = std::exp(std::lgamma(n + 0.5)) / std::sqrt(M_PI);
    return coeff * std::pow(base, n);
}

// E[cos(alpha (X_t - X_0))] for an OU process, closed form per init mode.
inline double expected_cos(double alpha, double t, double k, double gamma,
                           NoiseInit init) {
    if (alpha < 0.0) throw ConfigError("expected_cos: alpha must be >= 0");
    if (t < 0.0) throw ConfigError("expected_cos: t must be >= 0");
    if (k <= kWhiteLimit)
        return std::exp(-0.5 * alpha * alpha * gamma * gamma * t);
    const double a2 = alpha * alpha;
    const double pref = gamma * gamma / (2.0 * k);
    if (init == NoiseInit::calibrated)
        return std::exp(-a2 * pref * std::exp(-k * t) * std::sinh(k * t));
    return std::exp(-a2 * pref * std::exp(-k * t) * (std::exp(k * t) - 1.0));
}

// Monte Carlo estimate of |E[X_T^2 V] - E[X_T^2] E[V]| for a trajectory
// functional V. The factorization would be exact if V were independent of
// the driving noise; the residual quantifies how far a given observable is
// from that regime.
inline double ito_isometry_residual(
    const NoiseSpec& spec, double dt, int steps, long trials,
    const std::function<double(const NoisePath&)>& observable,
    std::uint64_t seed = 1, int threads = 0) {
    if (trials < 100)
        throw ConfigError("ito_isometry_residual: need at least 100 trials for a meaningful estimate");
    std::vector<double> xv(trials), ov(trials);
    parallel_for(trials, threads, [&](long i) {
        const NoisePath p = sample_path(spec, dt, steps, derive_seed(seed, i));
        xv[i] = p.x[steps] * p.x[steps];
        ov[i] = observable(p);
    });
    double mx = 0.0, mo = 0.0, mxo = 0.0;
    for (long i = 0; i < trials; ++i) {
        mx += xv[i];
        mo += ov[i];
        mxo += xv[i] * ov[i];
    }
    mx /= trials;
    mo /= trials;
    mxo /= trials;
    return std::abs(mxo - mx * mo);
}

}  // namespace fvqoc

#pragma once

// Weak-order time steppers for dY = a(Y) dt + sum_l b_l(Y) dW_l. Noise draws
// are always injected by the caller so that one Wiener realization can drive
// several coupled propagations (state, transfer system, finite-difference
// twins). Time dependence is handled by augmenting the state or by stepping
// interval by interval with refreshed coefficients.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/linalg.hpp"

namespace fvqoc {

enum class Scheme { euler, platen };

struct SdeSystem {
    int dim = 0;
    // drift(y, out): out = a(y); diffusion[l](y, out): out = b_l(y).
    std::function<void(const CVec&, CVec&)> drift;
    std::vector<std::function<void(const CVec&, CVec&)>> diffusion;

    int channels() const { return static_cast<int>(diffusion.size()); }
};

namespace detail {
inline void axpy(CVec& y, const CVec& x, double c) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}
inline void check_finite(const CVec& y, long step, const char* where) {
    if (!all_finite(y))
        throw NumericalError(std::string(where) + ": non-finite state (reduce dt)", step);
}
}  // namespace detail

// Explicit weak first-order Euler-Maruyama step. dw_per_channel carries the
// actual Wiener increments (variance dt).
inline CVec euler_maruyama_step(const SdeSystem& sys, const CVec& y, double dt,
                                const std::vector<double>& dw_per_channel,
                                long step_index = -1) {
    CVec out = y;
    CVec buf(sys.dim);
    sys.drift(y, buf);
    detail::axpy(out, buf, dt);
    for (int l = 0; l < sys.channels(); ++l) {
        sys.diffusion[l](y, buf);
        detail::axpy(out, buf, dw_per_channel[l]);
    }
    detail::check_finite(out, step_index, "euler_maruyama_step");
    return out;
}

// Explicit weak second-order Platen step. n_per_channel are standard normal
// draws; supporting values are formed independently per channel.
inline CVec platen_step(const SdeSystem& sys, const CVec& y, double dt,
                        const std::vector<double>& n_per_channel,
                        long step_index = -1) {
    const int L = sys.channels();
    const double sqdt = std::sqrt(dt);

    CVec a0(sys.dim);
    sys.drift(y, a0);
    std::vector<CVec> b0(L, CVec(sys.dim));
    for (int l = 0; l < L; ++l) sys.diffusion[l](y, b0[l]);

    // Predictor: Ybar = y + a dt + sum_l b_l N_l sqrt(dt).
    CVec ybar = y;
    detail::axpy(ybar, a0, dt);
    for (int l = 0; l < L; ++l) detail::axpy(ybar, b0[l], n_per_channel[l] * sqdt);

    CVec abar(sys.dim);
    sys.drift(ybar, abar);

    CVec out = y;
    detail::axpy(out, a0, 0.5 * dt);
    detail::axpy(out, abar, 0.5 * dt);

    CVec yp(sys.dim), ym(sys.dim), bp(sys.dim), bm(sys.dim);
    for (int l = 0; l < L; ++l) {
        // Per-channel supporting values Y+- = y + a dt +- b_l sqrt(dt).
        yp = y;
        detail::axpy(yp, a0, dt);
        ym = yp;
        detail::axpy(yp, b0[l], sqdt);
        detail::axpy(ym, b0[l], -sqdt);
        sys.diffusion[l](yp, bp);
        sys.diffusion[l](ym, bm);
        const double n = n_per_channel[l];
        const double w1 = 0.25 * n * sqdt;
        const double w2 = 0.25 * (n * n - 1.0) * sqdt;
        for (int i = 0; i < sys.dim; ++i) {
            out[i] += w1 * (bp[i] + bm[i] + 2.0 * b0[l][i]);
            out[i] += w2 * (bp[i] - bm[i]);
        }
    }
    detail::check_finite(out, step_index, "platen_step");
    return out;
}

// Full trajectory with injected draws: draws[i] holds one standard normal
// per channel for step i. Euler consumes them as dw = N sqrt(dt).
inline std::vector<CVec> integrate(const SdeSystem& sys, const CVec& y0, double dt,
                                   int steps,
                                   const std::vector<std::vector<double>>& draws,
                                   Scheme scheme = Scheme::platen) {
    if (dt <= 0.0) throw ConfigError("integrate: dt must be > 0");
    std::vector<CVec> traj;
    traj.reserve(steps + 1);
    traj.push_back(y0);
    const double sqdt = std::sqrt(dt);
    std::vector<double> dw(sys.channels());
    for (int i = 0; i < steps; ++i) {
        try {
            if (scheme == Scheme::euler) {
                for (int l = 0; l < sys.channels(); ++l) dw[l] = draws[i][l] * sqdt;
                traj.push_back(euler_maruyama_step(sys, traj.back(), dt, dw, i));
            } else {
                traj.push_back(platen_step(sys, traj.back(), dt, draws[i], i));
            }
        } catch (const NumericalError& e) {
            // Re-throw with the last finite state attached for diagnostics.
            std::string msg = std::string(e.what()) + "; last finite state norm " +
                              std::to_string(norm2(traj.back()));
            throw NumericalError(msg, i);
        }
    }
    return traj;
}

}  // namespace fvqoc

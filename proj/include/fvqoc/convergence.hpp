#pragma once

// Weak-order instrumentation for the SDE steppers: errors of E[Y_T^2] on the
// linear test system dY = a Y dt + s Y dW against the exact lognormal
// solution evaluated on the same Brownian increments (the differencing keeps
// Monte Carlo noise far below the discretization error being measured).

#include <cmath>
#include <cstdint>
#include <vector>

#include "fvqoc/parallel.hpp"
#include "fvqoc/rng.hpp"
#include "fvqoc/sde.hpp"

namespace fvqoc {

struct WeakErrorPoint {
    double dt = 0.0;
    double error = 0.0;  // E[f(Y^scheme)] - E[f(Y^exact)], f(y) = y^2
    double sem = 0.0;
};

struct WeakOrderStudy {
    std::vector<WeakErrorPoint> points;
    double slope = 0.0;  // log-log fit of |error| against dt
};

inline WeakErrorPoint weak_error_linear_system(double drift_rate, double diffusion_rate,
                                               double horizon, double dt, long paths,
                                               Scheme scheme, std::uint64_t seed,
                                               int threads = 0) {
    const int steps = static_cast<int>(std::llround(horizon / dt));
    SdeSystem sys;
    sys.dim = 1;
    sys.drift = [drift_rate](const CVec& y, CVec& o) { o[0] = drift_rate * y[0]; };
    sys.diffusion = {[diffusion_rate](const CVec& y, CVec& o) { o[0] = diffusion_rate * y[0]; }};

    const long chunk = 256;
    const long nchunks = (paths + chunk - 1) / chunk;
    std::vector<double> sum(nchunks, 0.0), sum2(nchunks, 0.0);
    parallel_for(nchunks, threads, [&](long ci) {
        double acc = 0.0, acc2 = 0.0;
        const double sqdt = std::sqrt(dt);
        std::vector<double> dw(1), draw(1);
        for (long p = ci * chunk; p < std::min(paths, (ci + 1) * chunk); ++p) {
            Rng rng(derive_seed(seed, p));
            CVec y{cplx(1.0, 0.0)};
            double wsum = 0.0;
            for (int i = 0; i < steps; ++i) {
                const double n = rng.normal();
                wsum += sqdt * n;
                if (scheme == Scheme::euler) {
                    dw[0] = sqdt * n;
                    y = euler_maruyama_step(sys, y, dt, dw, i);
                } else {
                    draw[0] = n;
                    y = platen_step(sys, y, dt, draw, i);
                }
            }
            const double exact = std::exp(
                (drift_rate - 0.5 * diffusion_rate * diffusion_rate) * horizon +
                diffusion_rate * wsum);
            const double fs = std::norm(y[0]);
            const double fe = exact * exact;
            const double d = fs - fe;
            acc += d;
            acc2 += d * d;
        }
        sum[ci] = acc;
        sum2[ci] = acc2;
    });
    double m = 0.0, m2 = 0.0;
    for (long i = 0; i < nchunks; ++i) {
        m += sum[i];
        m2 += sum2[i];
    }
    m /= paths;
    m2 /= paths;
    return {dt, m, std::sqrt(std::max(0.0, m2 - m * m) / paths)};
}

inline WeakOrderStudy weak_order_study(Scheme scheme, const std::vector<double>& dts,
                                       long paths, std::uint64_t seed, int threads = 0,
                                       double drift_rate = 1.0, double diffusion_rate = 0.5,
                                       double horizon = 1.0) {
    WeakOrderStudy study;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double dt : dts) {
        WeakErrorPoint pt = weak_error_linear_system(drift_rate, diffusion_rate, horizon, dt,
                                                     paths, scheme, seed, threads);
        study.points.push_back(pt);
        const double lx = std::log(dt);
        const double ly = std::log(std::abs(pt.error));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(dts.size());
    study.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return study;
}

}  // namespace fvqoc

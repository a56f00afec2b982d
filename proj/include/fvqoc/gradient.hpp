#pragma once

// Analytic gradients of the pulse-optimization cost
//
//   J = J1 + J2 + J3,
//   J1 = phi_T^dag H_targ phi_T          (or -|Tr[U_targ^dag V_T]|^2 for gates)
//   J2 = lambda/2 ||z||_2^2
//   J3 = -mu E[ F_T + nu int_0^T F_s ds ]
//
// J1/J2 gradients use the adjoint of the exact piecewise-constant step
// exponentials, with the control operator averaged over each step
// (Daleckii-Krein transform) so finite differences of the discrete dynamics
// are matched to O(h^2) rather than O(dt). J3 gradients contract the adjoint
// weight zeta_t with Psi_t A_j eta_t along each noise realization; common
// random numbers make the Monte Carlo mean comparable against pathwise
// finite differences.

#include <cmath>
#include <cstdint>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/linalg.hpp"
#include "fvqoc/sse.hpp"
#include "fvqoc/transfer.hpp"

namespace fvqoc {

struct CostWeights {
    double lambda = 0.0;
    double mu = 0.0;
    double nu = 0.0;
};

using PulseGrid = std::vector<std::vector<double>>;  // channels x steps

struct GradientSample {
    PulseGrid g;          // gradient densities on the pulse grid
    std::uint64_t seed = 0;
    double j3 = 0.0;      // this trial's J3 contribution
    double f_terminal = 0.0;
    double f_integral = 0.0;
};

inline PulseGrid zero_grid(int channels, int steps) {
    return PulseGrid(channels, std::vector<double>(steps, 0.0));
}

inline void grid_axpy(PulseGrid& y, const PulseGrid& x, double c) {
    for (size_t j = 0; j < y.size(); ++j)
        for (size_t i = 0; i < y[j].size(); ++i) y[j][i] += c * x[j][i];
}

inline double grid_norm(const PulseGrid& g) {
    double s = 0.0;
    for (const auto& ch : g)
        for (double v : ch) s += v * v;
    return std::sqrt(s);
}

//============================================================================
// Deterministic costs
//============================================================================

inline double j2_cost(const ControlPulse& pulse, double lambda) {
    double s = 0.0;
    for (const auto& ch : pulse.z)
        for (double v : ch) s += v * v;
    return 0.5 * lambda * s * pulse.dt;
}

inline double j1_state_cost(const QubitSystem& sys, const Matrix& h_targ,
                            const ControlPulse& pulse, const QuantumState& phi0) {
    const auto phi = propagate_deterministic(sys, pulse, phi0);
    return std::real(inner(phi.back(), h_targ.apply(phi.back())));
}

inline double j1_gate_cost(const QubitSystem& sys, const Matrix& u_targ,
                           const ControlPulse& pulse) {
    DeterministicReference ref = build_reference(sys, pulse);
    const cplx tau = (u_targ.adjoint() * ref.prefix.back()).trace();
    return -std::norm(tau);
}

//============================================================================
// Step-averaged control operators
//============================================================================

namespace detail {

// T_{j,i} = V diag-transform(V^dag H_j V) V^dag with the entrywise factor
// (1 - e^{-i dt (la - lb)}) / (i dt (la - lb)); the exact derivative of the
// step exponential is dU/dz = i dt U T.
inline Matrix step_averaged_operator(const EigDecomposition& eig, const Matrix& hj,
                                     double dt) {
    const int d = eig.vectors.rows();
    const Matrix& v = eig.vectors;
    Matrix w = v.adjoint() * hj * v;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            const double delta = eig.values[a] - eig.values[b];
            const double xdt = dt * delta;
            cplx f;
            if (std::abs(xdt) < 1e-8) {
                f = cplx(1.0, -0.5 * xdt);  // series of (1-e^{-ix})/(ix)
            } else {
                f = (cplx(1.0, 0.0) - std::polar(1.0, -xdt)) / cplx(0.0, xdt);
            }
            w(a, b) *= f;
        }
    return v * w * v.adjoint();
}

}  // namespace detail

//============================================================================
// VQOC gradient (deterministic terms)
//============================================================================

// Gradient density of J1 + J2 for a Hamiltonian target:
//   g_j(t_i) = lambda z_j(t_i) + i phi^dag (G T - T^dag G) phi,
// where G = Gamma^dag(T,t_i) H_targ Gamma(T,t_i). The complex expression is
// Hermitian-paired; a nonvanishing imaginary residue signals a convention
// violation and raises.
inline PulseGrid vqoc_gradient(const QubitSystem& sys, const Matrix& h_targ,
                               const ControlPulse& pulse, const QuantumState& phi0,
                               double lambda,
                               const DeterministicReference* ref_in = nullptr) {
    DeterministicReference ref_local;
    const DeterministicReference* ref = ref_in;
    if (!ref) {
        ref_local = build_reference(sys, pulse);
        ref = &ref_local;
    }
    const int n = pulse.steps();
    const int nj = pulse.channels();
    const auto phi = deterministic_states(*ref, phi0.amplitudes());
    const Matrix& pn = ref->prefix[n];

    PulseGrid g = zero_grid(nj, n);
    for (int i = 0; i < n; ++i) {
        const Matrix gamma = pn * ref->prefix[i].adjoint();
        const Matrix gtil = gamma.adjoint() * h_targ * gamma;
        for (int j = 0; j < nj; ++j) {
            const Matrix t = detail::step_averaged_operator(ref->step_eigs[i],
                                                            sys.controls[j], pulse.dt);
            const Matrix comm = gtil * t - t.adjoint() * gtil;
            const cplx c = inner(phi[i], comm.apply(phi[i]));
            if (std::abs(c.real()) > 1e-8)
                throw NumericalError(
                    "vqoc_gradient: imaginary residue " + std::to_string(c.real()) +
                        " indicates a convention violation",
                    i);
            g[j][i] = lambda * pulse.z[j][i] - c.imag();
        }
    }
    return g;
}

// Gradient density of J1(V) = -|Tr[U_targ^dag V_T]|^2.
inline PulseGrid gate_overlap_gradient(const QubitSystem& sys, const Matrix& u_targ,
                                       const ControlPulse& pulse,
                                       const DeterministicReference* ref_in = nullptr) {
    DeterministicReference ref_local;
    const DeterministicReference* ref = ref_in;
    if (!ref) {
        ref_local = build_reference(sys, pulse);
        ref = &ref_local;
    }
    const int n = pulse.steps();
    const int nj = pulse.channels();
    const Matrix& pn = ref->prefix[n];
    const cplx tau = (u_targ.adjoint() * pn).trace();

    PulseGrid g = zero_grid(nj, n);
    for (int i = 0; i < n; ++i) {
        const Matrix gamma = pn * ref->prefix[i].adjoint();
        const Matrix lead = u_targ.adjoint() * gamma;
        for (int j = 0; j < nj; ++j) {
            const Matrix t = detail::step_averaged_operator(ref->step_eigs[i],
                                                            sys.controls[j], pulse.dt);
            const cplx tr = (lead * t * ref->prefix[i]).trace();
            g[j][i] = -2.0 * std::real(cplx(0.0, 1.0) * tr * std::conj(tau));
        }
    }
    return g;
}

//============================================================================
// Adjoint weight zeta
//============================================================================

// zeta_t = (terminal row) + nu int_t^T r_s ds with r_s = eta_s^dag L0 Phi_s
// in state mode and r_s = e_0^dag Phi_s in gate mode, accumulated by
// reverse trapezoid. zeta_T always equals the terminal row.
inline std::vector<CVec> zeta_series(const EtaTrajectory& traj, double nu, EtaMode mode) {
    const int n = traj.steps;
    const int m = static_cast<int>(traj.eta[0].size());
    if (traj.phi_op.empty())
        throw ConfigError("zeta_series: trajectory lacks the solution operator");

    auto row = [&](int i) {
        CVec r(m);
        const Matrix& phi = traj.phi_op[i];
        const cplx w = mode == EtaMode::state ? std::conj(traj.eta[i][0]) : cplx(1.0, 0.0);
        for (int c = 0; c < m; ++c) r[c] = w * phi(0, c);
        return r;
    };

    std::vector<CVec> zeta(n + 1);
    CVec terminal = row(n);
    zeta[n] = terminal;
    CVec acc(m, cplx(0.0, 0.0));
    CVec prev = terminal;
    for (int i = n - 1; i >= 0; --i) {
        CVec ri = row(i);
        for (int c = 0; c < m; ++c) acc[c] += 0.5 * traj.dt * (ri[c] + prev[c]);
        zeta[i] = terminal;
        for (int c = 0; c < m; ++c) zeta[i][c] += nu * acc[c];
        prev = std::move(ri);
    }
    return zeta;
}

//============================================================================
// Stochastic gradients (one trial per call)
//============================================================================

namespace detail {

inline CVec row_times_matrix(const CVec& row, const Matrix& m) {
    const int n = m.rows();
    CVec out(m.cols(), cplx(0.0, 0.0));
    for (int q = 0; q < n; ++q) {
        const cplx rq = row[q];
        if (rq == cplx(0.0, 0.0)) continue;
        for (int c = 0; c < m.cols(); ++c) out[c] += rq * m(q, c);
    }
    return out;
}

inline cplx row_dot(const CVec& row, const CVec& v) {
    cplx s(0.0, 0.0);
    for (size_t i = 0; i < row.size(); ++i) s += row[i] * v[i];
    return s;
}

inline double trapezoid(const std::vector<double>& f, double dt) {
    double s = 0.0;
    for (size_t i = 0; i + 1 < f.size(); ++i) s += 0.5 * dt * (f[i] + f[i + 1]);
    return s;
}

}  // namespace detail

// Shared core of the fixed/scaled stochastic gradients. The fixed-noise term
// is -mu * c * Re[zeta Psi A_j eta] with c = 2 for the quadratic state
// fidelity and c = 1 for the linear gate overlap; scaled mode adds the
// dW-weighted diffusion-derivative term for channels coupled to pulse j.
inline GradientSample fvqoc_gradient_trial(const TransferSystem& ts, const QubitSystem& sys,
                                           const ControlPulse& pulse, const EtaState& eta0,
                                           const CostWeights& weights, ScalingMode scaling,
                                           std::uint64_t seed,
                                           const std::vector<NoisePath>* paths = nullptr,
                                           Scheme scheme = Scheme::platen) {
    EtaSettings settings;
    settings.scheme = scheme;
    settings.scaling = scaling;
    EtaTrajectory traj = propagate_eta(ts, sys, pulse, eta0, settings, seed, paths);

    const int n = pulse.steps();
    const int nj = pulse.channels();
    const int m = ts.m();
    const double mu = weights.mu;
    const bool gate = eta0.mode == EtaMode::gate;
    const double quad = gate ? 1.0 : 2.0;

    const std::vector<CVec> zeta = zeta_series(traj, weights.nu, eta0.mode);

    GradientSample out;
    out.seed = seed;
    out.g = zero_grid(nj, n);

    CVec av(m);
    for (int i = 0; i < n; ++i) {
        const CVec xi = detail::row_times_matrix(zeta[i], traj.psi_op[i]);
        for (int j = 0; j < nj; ++j) {
            std::fill(av.begin(), av.end(), cplx(0.0, 0.0));
            ts.a[j].apply_add(traj.eta[i], av);
            double val = quad * std::real(detail::row_dot(xi, av));
            if (scaling == ScalingMode::scaled) {
                for (size_t l = 0; l < sys.channels.size(); ++l) {
                    if (sys.channels[l].coupling != j) continue;
                    const double z = pulse.z[j][i];
                    const double s = (z > 0.0) - (z < 0.0);
                    if (s == 0.0) continue;
                    const double gamma = sys.channels[l].spec.gamma;
                    const double zabs = std::max(std::abs(z), settings.eps_z);
                    std::fill(av.begin(), av.end(), cplx(0.0, 0.0));
                    ts.b[l].apply_add(traj.eta[i], av);
                    const double coeff =
                        0.5 * gamma * s / std::sqrt(zabs) * traj.dw[l][i] / pulse.dt;
                    val += quad * coeff * std::real(detail::row_dot(xi, av));
                }
            }
            out.g[j][i] = -mu * val;
        }
    }

    const std::vector<double>& f = traj.fidelity;
    if (gate) {
        std::vector<double> re0(n + 1);
        for (int i = 0; i <= n; ++i) re0[i] = std::real(traj.eta[i][0]);
        out.f_terminal = re0[n];
        out.f_integral = detail::trapezoid(re0, pulse.dt);
    } else {
        out.f_terminal = f[n];
        out.f_integral = detail::trapezoid(f, pulse.dt);
    }
    out.j3 = -mu * (out.f_terminal + weights.nu * out.f_integral);
    return out;
}

// Fixed noise: strengths independent of the controls.
inline GradientSample fvqoc_gradient_fixed(const TransferSystem& ts, const QubitSystem& sys,
                                           const ControlPulse& pulse, const EtaState& eta0,
                                           const CostWeights& weights, std::uint64_t seed,
                                           const std::vector<NoisePath>* paths = nullptr,
                                           Scheme scheme = Scheme::platen) {
    return fvqoc_gradient_trial(ts, sys, pulse, eta0, weights, ScalingMode::fixed, seed,
                                paths, scheme);
}

// Scaled noise: diffusion weight |z|^{1/2}; requires the driving Wiener
// increments recorded with each path.
inline GradientSample fvqoc_gradient_scaled(const TransferSystem& ts, const QubitSystem& sys,
                                            const ControlPulse& pulse, const EtaState& eta0,
                                            const CostWeights& weights, std::uint64_t seed,
                                            const std::vector<NoisePath>* paths = nullptr,
                                            Scheme scheme = Scheme::platen) {
    for (const auto& c : sys.channels)
        if (c.coupling < 0)
            throw ConfigError("fvqoc_gradient_scaled: every channel needs a pulse coupling");
    return fvqoc_gradient_trial(ts, sys, pulse, eta0, weights, ScalingMode::scaled, seed,
                                paths, scheme);
}

// Gate-mode stochastic gradient: linear cost on the gate eta system.
inline GradientSample gate_fidelity_gradient(const TransferSystem& ts, const QubitSystem& sys,
                                             const ControlPulse& pulse,
                                             const CostWeights& weights, std::uint64_t seed,
                                             const std::vector<NoisePath>* paths = nullptr,
                                             Scheme scheme = Scheme::platen,
                                             ScalingMode scaling = ScalingMode::fixed) {
    const EtaState eta0 = gate_eta_init(sys.n_qubits);
    return fvqoc_gradient_trial(ts, sys, pulse, eta0, weights, scaling, seed, paths, scheme);
}

}  // namespace fvqoc

#pragma once

// Transfer-matrix representation of the pair (phi, psi): the 4^N overlaps
// eta_m = phi^dag P_m psi close into a linear SDE
//
//   d eta = [A(z) - 1/2 sum_l g_l^2 w_l B_l^dag B_l] eta dt + sum_l B_l eta dX_l
//
// with anti-Hermitian generators assembled from trace expansions,
//
//   (A_j)_{mn} = (i/2^N) Tr[P_m [H_j, P_n]],   (B_l)_{mn} = (i/2^N) Tr[P_m S_l P_n].
//
// The 1/2^N normalization and the B index order are locked by
// consistency_check against direct state propagation. The solution operator
// Phi (Phi_0 = I) and its inverse Psi are propagated alongside eta with the
// same noise realization; Psi comes from matrix inversion at stored steps by
// default, with the forward-SDE variant available for comparison.

#include <cmath>
#include <cstdint>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/linalg.hpp"
#include "fvqoc/noise.hpp"
#include "fvqoc/sde.hpp"
#include "fvqoc/sse.hpp"

namespace fvqoc {

//============================================================================
// Transfer system assembly
//============================================================================

struct TransferSystem {
    PauliBasis basis;
    Matrix a_drift;              // 0x0 when the system has no drift term
    std::vector<Matrix> a;       // one per control channel
    std::vector<Matrix> b;       // one per noise channel
    std::vector<Matrix> btb;     // cached B_l^dag B_l
    double normalization = 1.0;  // trace-expansion factor 1/2^N

    int m() const { return basis.size(); }
    bool has_drift() const { return a_drift.rows() > 0; }
};

namespace detail {

// (i/2^N) Tr[P_m [H, P_n]] over the full basis.
inline Matrix commutator_generator(const Matrix& h, const PauliBasis& basis) {
    const int m = basis.size();
    const double norm = 1.0 / static_cast<double>(basis.dim());
    Matrix out(m, m);
    for (int n = 0; n < m; ++n) {
        const Matrix hp = h * basis[n] - basis[n] * h;
        for (int mm = 0; mm < m; ++mm)
            out(mm, n) = cplx(0.0, norm) * (basis[mm] * hp).trace();
    }
    return out;
}

// (i/2^N) Tr[P_m S P_n] over the full basis.
inline Matrix noise_generator(const Matrix& s, const PauliBasis& basis) {
    const int m = basis.size();
    const double norm = 1.0 / static_cast<double>(basis.dim());
    Matrix out(m, m);
    for (int n = 0; n < m; ++n) {
        const Matrix sp = s * basis[n];
        for (int mm = 0; mm < m; ++mm)
            out(mm, n) = cplx(0.0, norm) * (basis[mm] * sp).trace();
    }
    return out;
}

}  // namespace detail

inline TransferSystem build_transfer_system(const QubitSystem& sys, PauliBasis basis) {
    sys.validate();
    if (basis.dim() != sys.dim())
        throw ConfigError("build_transfer_system: basis does not match system size");
    TransferSystem ts;
    ts.normalization = 1.0 / static_cast<double>(basis.dim());
    if (sys.has_drift()) {
        ts.a_drift = detail::commutator_generator(sys.drift, basis);
        if (!ts.a_drift.is_anti_hermitian(1e-12))
            throw NumericalError("build_transfer_system: drift generator not anti-Hermitian");
    }
    for (const auto& h : sys.controls) {
        ts.a.push_back(detail::commutator_generator(h, basis));
        if (!ts.a.back().is_anti_hermitian(1e-12))
            throw NumericalError("build_transfer_system: control generator not anti-Hermitian");
    }
    for (const auto& c : sys.channels) {
        ts.b.push_back(detail::noise_generator(c.op, basis));
        if (!ts.b.back().is_anti_hermitian(1e-12))
            throw NumericalError("build_transfer_system: noise generator not anti-Hermitian");
        ts.btb.push_back(ts.b.back().adjoint() * ts.b.back());
    }
    ts.basis = std::move(basis);
    return ts;
}

//============================================================================
// Eta states
//============================================================================

enum class EtaMode { state, gate };

struct EtaState {
    CVec eta;
    EtaMode mode = EtaMode::state;
};

inline EtaState eta_from_states(const PauliBasis& basis, const CVec& phi, const CVec& psi) {
    EtaState s;
    s.mode = EtaMode::state;
    s.eta.resize(basis.size());
    for (int m = 0; m < basis.size(); ++m)
        s.eta[m] = inner(phi, basis[m].apply(psi));
    return s;
}

// Gate-mode initial vector: component 0 equals Tr[P_0 Q]/2^N = 1 at Q = I.
inline EtaState gate_eta_init(int n_qubits) {
    EtaState s;
    s.mode = EtaMode::gate;
    s.eta.assign(1 << (2 * n_qubits), cplx(0.0, 0.0));
    s.eta[0] = 1.0;
    return s;
}

// Reconstructs Q = sum_m eta_m P_m from gate-mode components.
inline Matrix gate_operator_from_eta(const PauliBasis& basis, const CVec& eta) {
    Matrix q = Matrix::zero(basis.dim(), basis.dim());
    for (int m = 0; m < basis.size(); ++m) {
        Matrix term = basis[m];
        term *= eta[m];
        q += term;
    }
    return q;
}

//============================================================================
// Propagation of (eta, Phi, Psi)
//============================================================================

enum class PsiMethod { invert, sde };

struct EtaTrajectory {
    double dt = 0.0;
    int steps = 0;
    std::uint64_t seed = 0;
    std::vector<CVec> eta;               // steps+1 vectors of length m
    std::vector<Matrix> phi_op;          // forward solution operator
    std::vector<Matrix> psi_op;          // its inverse
    std::vector<std::vector<double>> x;  // realized noise values [L][steps+1]
    std::vector<std::vector<double>> dw; // driving Wiener increments [L][steps]
    std::vector<double> fidelity;        // |eta_0|^2 (state mode)
};

struct EtaSettings {
    Scheme scheme = Scheme::platen;
    ScalingMode scaling = ScalingMode::fixed;
    double eps_z = 1e-8;
    bool want_phi = true;            // propagate Phi/Psi alongside eta
    PsiMethod psi_method = PsiMethod::invert;
    double condition_limit = 1e8;
};

inline EtaTrajectory propagate_eta(const TransferSystem& ts, const QubitSystem& sys,
                                   const ControlPulse& pulse, const EtaState& eta0,
                                   const EtaSettings& settings, std::uint64_t seed,
                                   const std::vector<NoisePath>* paths_in = nullptr) {
    const int m = ts.m();
    const int L = static_cast<int>(sys.channels.size());
    const int n = pulse.steps();
    const double dt = pulse.dt;
    if (static_cast<int>(eta0.eta.size()) != m)
        throw ConfigError("propagate_eta: eta0 length does not match basis");

    std::vector<NoisePath> paths_local;
    const std::vector<NoisePath>* paths = paths_in;
    if (!paths) {
        paths_local = sample_channel_paths(sys, dt, n, seed);
        paths = &paths_local;
    }

    // Per-step drift matrices without the X-coupling: A(z) - 1/2 sum g^2 w B^dag B.
    std::vector<Matrix> c_step;
    c_step.reserve(n);
    std::vector<std::vector<double>> diff_scale(n, std::vector<double>(L, 0.0));
    std::vector<std::vector<double>> drift_scale(n, std::vector<double>(L, 0.0));
    std::vector<double> gamma(L), krate(L);
    for (int l = 0; l < L; ++l) {
        gamma[l] = sys.channels[l].spec.gamma;
        const bool white = sys.channels[l].spec.kind == NoiseKind::white ||
                           sys.channels[l].spec.k <= kWhiteLimit;
        krate[l] = white ? 0.0 : sys.channels[l].spec.k;
    }
    for (int i = 0; i < n; ++i) {
        Matrix c = ts.has_drift() ? ts.a_drift : Matrix::zero(m, m);
        for (size_t j = 0; j < ts.a.size(); ++j) {
            Matrix term = ts.a[j];
            term *= cplx(pulse.z[j][i], 0.0);
            c += term;
        }
        for (int l = 0; l < L; ++l) {
            double w = 1.0, u = 1.0;
            if (settings.scaling == ScalingMode::scaled) {
                const int j = sys.channels[l].coupling;
                if (j < 0 || j >= pulse.channels())
                    throw ConfigError("propagate_eta: scaled channel without valid coupling");
                const double zabs = std::abs(pulse.z[j][i]);
                w = zabs;
                u = std::sqrt(std::max(zabs, settings.eps_z));
            }
            Matrix term = ts.btb[l];
            term *= cplx(-0.5 * gamma[l] * gamma[l] * w, 0.0);
            c += term;
            diff_scale[i][l] = u * gamma[l];
            drift_scale[i][l] = -u * krate[l];
        }
        c_step.push_back(std::move(c));
    }

    // Augmented state: [eta | Phi columns | Psi rows (sde variant) | X].
    const bool with_phi = settings.want_phi;
    const bool with_psi_sde = with_phi && settings.psi_method == PsiMethod::sde;
    const int phi_off = m;
    const int psi_off = phi_off + (with_phi ? m * m : 0);
    const int x_off = psi_off + (with_psi_sde ? m * m : 0);
    const int total = x_off + L;

    struct Ctx {
        int step = 0;
    } ctx;

    Matrix scratch(m, m);
    auto assemble = [&](int i, const CVec& y) -> const Matrix& {
        scratch = c_step[i];
        for (int l = 0; l < L; ++l) {
            const double cc = drift_scale[i][l];
            if (cc != 0.0) {
                const double xl = y[x_off + l].real();
                const Matrix& bl = ts.b[l];
                const cplx f(cc * xl, 0.0);
                for (int r = 0; r < m; ++r)
                    for (int q = 0; q < m; ++q) scratch(r, q) += f * bl(r, q);
            }
        }
        return scratch;
    };

    SdeSystem sde;
    sde.dim = total;
    sde.drift = [&](const CVec& y, CVec& out) {
        const Matrix& mat = assemble(ctx.step, y);
        std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
        for (int r = 0; r < m; ++r) {
            cplx acc(0.0, 0.0);
            for (int q = 0; q < m; ++q) acc += mat(r, q) * y[q];
            out[r] = acc;
        }
        if (with_phi)
            for (int col = 0; col < m; ++col) {
                const int off = phi_off + col * m;
                for (int r = 0; r < m; ++r) {
                    cplx acc(0.0, 0.0);
                    for (int q = 0; q < m; ++q) acc += mat(r, q) * y[off + q];
                    out[off + r] = acc;
                }
            }
        if (with_psi_sde)
            for (int row = 0; row < m; ++row) {
                const int off = psi_off + row * m;
                for (int c = 0; c < m; ++c) {
                    cplx acc(0.0, 0.0);
                    for (int q = 0; q < m; ++q) acc += y[off + q] * mat(q, c);
                    out[off + c] = -acc;
                }
            }
        for (int l = 0; l < L; ++l)
            out[x_off + l] = -krate[l] * y[x_off + l].real();
    };
    sde.diffusion.resize(L);
    for (int l = 0; l < L; ++l) {
        sde.diffusion[l] = [&, l](const CVec& y, CVec& out) {
            std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
            const double sc = diff_scale[ctx.step][l];
            const Matrix& bl = ts.b[l];
            for (int r = 0; r < m; ++r) {
                cplx acc(0.0, 0.0);
                for (int q = 0; q < m; ++q) acc += bl(r, q) * y[q];
                out[r] = sc * acc;
            }
            if (with_phi)
                for (int col = 0; col < m; ++col) {
                    const int off = phi_off + col * m;
                    for (int r = 0; r < m; ++r) {
                        cplx acc(0.0, 0.0);
                        for (int q = 0; q < m; ++q) acc += bl(r, q) * y[off + q];
                        out[off + r] = sc * acc;
                    }
                }
            if (with_psi_sde)
                for (int row = 0; row < m; ++row) {
                    const int off = psi_off + row * m;
                    for (int c = 0; c < m; ++c) {
                        cplx acc(0.0, 0.0);
                        for (int q = 0; q < m; ++q) acc += y[off + q] * bl(q, c);
                        out[off + c] = -sc * acc;
                    }
                }
            out[x_off + l] = gamma[l];
        };
    }

    EtaTrajectory traj;
    traj.dt = dt;
    traj.steps = n;
    traj.seed = seed;
    traj.x.assign(L, std::vector<double>(n + 1, 0.0));
    traj.dw.assign(L, std::vector<double>(n, 0.0));

    CVec y(total, cplx(0.0, 0.0));
    for (int r = 0; r < m; ++r) y[r] = eta0.eta[r];
    if (with_phi)
        for (int d = 0; d < m; ++d) y[phi_off + d * m + d] = 1.0;
    if (with_psi_sde)
        for (int d = 0; d < m; ++d) y[psi_off + d * m + d] = 1.0;
    for (int l = 0; l < L; ++l) {
        y[x_off + l] = (*paths)[l].x[0];
        traj.x[l][0] = (*paths)[l].x[0];
    }

    auto record = [&](const CVec& state) {
        CVec eta(m);
        for (int r = 0; r < m; ++r) eta[r] = state[r];
        traj.fidelity.push_back(std::norm(eta[0]));
        traj.eta.push_back(std::move(eta));
        if (with_phi) {
            Matrix phi(m, m);
            for (int col = 0; col < m; ++col)
                for (int r = 0; r < m; ++r) phi(r, col) = state[phi_off + col * m + r];
            Matrix psi(m, m);
            if (with_psi_sde) {
                for (int row = 0; row < m; ++row)
                    for (int c = 0; c < m; ++c) psi(row, c) = state[psi_off + row * m + c];
            } else {
                psi = inverse(phi);
            }
            const double cond = phi.inf_norm() * psi.inf_norm();
            if (cond > settings.condition_limit)
                throw NumericalError(
                    "propagate_eta: solution operator condition number " +
                        std::to_string(cond) + " exceeds limit; reduce T or dt",
                    static_cast<long>(traj.phi_op.size()));
            traj.phi_op.push_back(std::move(phi));
            traj.psi_op.push_back(std::move(psi));
        }
    };
    record(y);

    const double sqdt = std::sqrt(dt);
    std::vector<double> draws(L), dws(L);
    for (int i = 0; i < n; ++i) {
        ctx.step = i;
        for (int l = 0; l < L; ++l) {
            dws[l] = (*paths)[l].dw[i];
            draws[l] = dws[l] / sqdt;
            traj.dw[l][i] = dws[l];
        }
        y = (settings.scheme == Scheme::euler) ? euler_maruyama_step(sde, y, dt, dws, i)
                                               : platen_step(sde, y, dt, draws, i);
        for (int l = 0; l < L; ++l) traj.x[l][i + 1] = y[x_off + l].real();
        record(y);
    }
    return traj;
}

//============================================================================
// Consistency between direct and transfer propagation
//============================================================================

// Propagates (phi, psi) directly and eta through the transfer system on the
// same noise realization, returning max_t ||eta_direct - eta_system||_inf.
// This is the test that locks the normalization and index conventions.
inline double consistency_check(const QubitSystem& sys, const ControlPulse& pulse,
                                const QuantumState& phi0, const QuantumState& psi0,
                                std::uint64_t seed, Scheme scheme = Scheme::platen,
                                ScalingMode scaling = ScalingMode::fixed) {
    const std::vector<NoisePath> paths =
        sample_channel_paths(sys, pulse.dt, pulse.steps(), seed);

    SseSettings sse_settings;
    sse_settings.scheme = scheme;
    sse_settings.scaling = scaling;
    sse_settings.renormalize = false;  // raw comparison of the two chains
    sse_settings.store_states = true;
    TrajectoryRecord rec = propagate_sse(sys, pulse, psi0, sse_settings, seed, &paths);

    PauliBasis basis = pauli_basis(sys.n_qubits);
    TransferSystem ts = build_transfer_system(sys, std::move(basis));
    EtaSettings eta_settings;
    eta_settings.scheme = scheme;
    eta_settings.scaling = scaling;
    eta_settings.want_phi = false;
    EtaState eta0 = eta_from_states(ts.basis, phi0.amplitudes(), psi0.amplitudes());
    EtaTrajectory traj = propagate_eta(ts, sys, pulse, eta0, eta_settings, seed, &paths);

    double dev = 0.0;
    for (int i = 0; i <= pulse.steps(); ++i) {
        const EtaState direct = eta_from_states(ts.basis, rec.phi[i], rec.psi[i]);
        for (int r = 0; r < ts.m(); ++r)
            dev = std::max(dev, std::abs(direct.eta[r] - traj.eta[i][r]));
    }
    return dev;
}

}  // namespace fvqoc

#pragma once

// Propagation of noisy states psi, noiseless states phi and unitary pairs
// (U, V) under the stochastic Schroedinger equation
//
//   d psi = i H psi dt - 1/2 sum_l S_l^2 psi d[X_l] + i sum_l S_l psi dX_l,
//
// with piecewise-constant controls H(t) = H_drift + sum_j z_j(t) H_j and
// classical noise processes X_l (white or OU). In scaled mode the channel
// coupled to pulse j carries weights |z_j| on d[X] and |z_j|^{1/2} on dX.
//
// The deterministic state advances by exact step exponentials; the noisy
// state advances with the injected-draw SDE steppers on the augmented state
// (psi, X_1..X_L), so the same Wiener realization can drive the transfer
// system representation and finite-difference twins step for step.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/linalg.hpp"
#include "fvqoc/noise.hpp"
#include "fvqoc/parallel.hpp"
#include "fvqoc/sde.hpp"

namespace fvqoc {

//============================================================================
// Pulses and systems
//============================================================================

// Piecewise-constant control amplitudes on a uniform grid: z[j][i] holds on
// [t_i, t_{i+1}).
struct ControlPulse {
    double dt = 0.0;
    int n_steps = 0;
    std::vector<std::vector<double>> z;  // channels x steps

    int channels() const { return static_cast<int>(z.size()); }
    int steps() const { return n_steps; }
    double horizon() const { return dt * n_steps; }

    static ControlPulse zero(int channels, int steps, double dt) {
        ControlPulse p;
        p.dt = dt;
        p.n_steps = steps;
        p.z.assign(channels, std::vector<double>(steps, 0.0));
        return p;
    }
    static ControlPulse constant(const std::vector<double>& values, int steps, double dt) {
        ControlPulse p;
        p.dt = dt;
        p.n_steps = steps;
        for (double v : values) p.z.push_back(std::vector<double>(steps, v));
        return p;
    }
    static ControlPulse random_uniform(int channels, int steps, double dt,
                                       double amplitude, std::uint64_t seed) {
        ControlPulse p = zero(channels, steps, dt);
        Rng rng(derive_seed(seed, 0x9a15eULL));
        for (auto& ch : p.z)
            for (auto& v : ch) v = rng.uniform(-amplitude, amplitude);
        return p;
    }
};

enum class ScalingMode { fixed, scaled };

struct NoiseChannel {
    Matrix op;       // Hermitian noise operator S_l
    NoiseSpec spec;  // driving process
    int coupling = -1;  // pulse channel index the noise scales with (scaled mode)
};

// Control Hamiltonians plus noise operators acting on 2^N levels.
struct QubitSystem {
    int n_qubits = 1;
    Matrix drift;                        // 0x0 when absent
    std::vector<Matrix> controls;        // H_j, one per pulse channel
    std::vector<NoiseChannel> channels;  // S_l

    int dim() const { return 1 << n_qubits; }
    bool has_drift() const { return drift.rows() > 0; }

    void validate() const {
        const int d = dim();
        if (has_drift() && (drift.rows() != d || !drift.is_hermitian(1e-10)))
            throw ConfigError("QubitSystem: drift must be Hermitian with dim 2^N");
        for (const auto& h : controls)
            if (h.rows() != d || !h.is_hermitian(1e-10))
                throw ConfigError("QubitSystem: control Hamiltonians must be Hermitian with dim 2^N");
        for (const auto& c : channels)
            if (c.op.rows() != d || !c.op.is_hermitian(1e-12))
                throw ConfigError("QubitSystem: noise operators must be Hermitian with dim 2^N");
    }
};

struct SseSettings {
    Scheme scheme = Scheme::platen;
    ScalingMode scaling = ScalingMode::fixed;
    bool renormalize = true;
    bool store_states = false;
    double eps_z = 1e-8;            // floor for the |z|^{1/2} diffusion weight
    double norm_drift_limit = 1e-3; // per-step drift beyond this aborts
};

//============================================================================
// Deterministic reference: exact step exponentials and prefix products
//============================================================================

struct DeterministicReference {
    double dt = 0.0;
    std::vector<EigDecomposition> step_eigs;  // of H(t_i), one per step
    std::vector<Matrix> step_unitaries;       // exp(i H(t_i) dt)
    std::vector<Matrix> prefix;               // P_i, phi_i = P_i phi_0; steps+1 entries
};

inline Matrix assemble_hamiltonian(const QubitSystem& sys, const ControlPulse& pulse, int step) {
    Matrix h = sys.has_drift() ? sys.drift : Matrix::zero(sys.dim(), sys.dim());
    for (int j = 0; j < pulse.channels(); ++j) {
        Matrix term = sys.controls[j];
        term *= cplx(pulse.z[j][step], 0.0);
        h += term;
    }
    return h;
}

inline DeterministicReference build_reference(const QubitSystem& sys, const ControlPulse& pulse) {
    DeterministicReference ref;
    ref.dt = pulse.dt;
    const int n = pulse.steps();
    ref.step_eigs.reserve(n);
    ref.step_unitaries.reserve(n);
    ref.prefix.reserve(n + 1);
    ref.prefix.push_back(Matrix::identity(sys.dim()));
    for (int i = 0; i < n; ++i) {
        ref.step_eigs.push_back(hermitian_eig(assemble_hamiltonian(sys, pulse, i)));
        ref.step_unitaries.push_back(expm_i_hermitian(ref.step_eigs.back(), pulse.dt));
        ref.prefix.push_back(ref.step_unitaries.back() * ref.prefix.back());
    }
    return ref;
}

// Noiseless trajectory phi_i = P_i phi_0 under d phi/dt = +i H(t) phi.
inline std::vector<CVec> deterministic_states(const DeterministicReference& ref, const CVec& phi0) {
    std::vector<CVec> phi;
    phi.reserve(ref.prefix.size());
    for (const auto& p : ref.prefix) phi.push_back(p.apply(phi0));
    return phi;
}

inline std::vector<CVec> propagate_deterministic(const QubitSystem& sys,
                                                 const ControlPulse& pulse,
                                                 const QuantumState& phi0) {
    return deterministic_states(build_reference(sys, pulse), phi0.amplitudes());
}

//============================================================================
// SSE propagation plan (per-pulse caches shared across trials)
//============================================================================

struct SsePlan {
    const QubitSystem* sys = nullptr;
    ControlPulse pulse;
    SseSettings settings;
    std::vector<Matrix> c_step;             // iH(t_i) - 1/2 sum_l g_l^2 w_{l,i} S_l^2
    std::vector<Matrix> i_s;                // i S_l
    std::vector<std::vector<double>> diff_scale;   // [step][l]: u_{l,i} * gamma_l
    std::vector<std::vector<double>> drift_scale;  // [step][l]: u_{l,i} * (-k_l)
    std::vector<double> gamma, k;
};

inline SsePlan build_sse_plan(const QubitSystem& sys, const ControlPulse& pulse,
                              const SseSettings& settings) {
    sys.validate();
    SsePlan plan;
    plan.sys = &sys;
    plan.pulse = pulse;
    plan.settings = settings;
    const int d = sys.dim();
    const int L = static_cast<int>(sys.channels.size());
    const int n = pulse.steps();

    std::vector<Matrix> s2;
    for (const auto& c : sys.channels) {
        s2.push_back(c.op * c.op);
        Matrix is = c.op;
        is *= cplx(0.0, 1.0);
        plan.i_s.push_back(is);
        plan.gamma.push_back(c.spec.gamma);
        const bool white = c.spec.kind == NoiseKind::white || c.spec.k <= kWhiteLimit;
        plan.k.push_back(white ? 0.0 : c.spec.k);
    }

    plan.c_step.reserve(n);
    plan.diff_scale.assign(n, std::vector<double>(L, 0.0));
    plan.drift_scale.assign(n, std::vector<double>(L, 0.0));
    for (int i = 0; i < n; ++i) {
        Matrix c = assemble_hamiltonian(sys, pulse, i);
        c *= cplx(0.0, 1.0);
        for (int l = 0; l < L; ++l) {
            double w = 1.0, u = 1.0;
            if (settings.scaling == ScalingMode::scaled) {
                const int j = sys.channels[l].coupling;
                if (j < 0 || j >= pulse.channels())
                    throw ConfigError("scaled noise channel without a valid pulse coupling");
                const double zabs = std::abs(pulse.z[j][i]);
                w = zabs;
                u = std::sqrt(std::max(zabs, settings.eps_z));
            }
            Matrix dis = s2[l];
            dis *= cplx(-0.5 * plan.gamma[l] * plan.gamma[l] * w, 0.0);
            c += dis;
            plan.diff_scale[i][l] = u * plan.gamma[l];
            plan.drift_scale[i][l] = -u * plan.k[l];
        }
        plan.c_step.push_back(std::move(c));
    }
    (void)d;
    return plan;
}

//============================================================================
// Trajectory record
//============================================================================

struct TrajectoryRecord {
    double dt = 0.0;
    int steps = 0;
    std::uint64_t seed = 0;
    std::vector<double> fidelity;           // |phi^dag psi|^2 at grid points
    std::vector<double> norm_drift;         // pre-renormalization |norm-1| per step
    std::vector<std::vector<double>> x;     // realized noise values [L][steps+1]
    std::vector<CVec> psi;                  // stored when store_states
    std::vector<CVec> phi;                  // stored when store_states
    CVec psi_final;

    double max_norm_drift() const {
        double m = 0.0;
        for (double v : norm_drift) m = std::max(m, v);
        return m;
    }
};

namespace detail {

// Builds the augmented SDE (psi block + one real X per channel stored in the
// real part of a trailing complex slot). ctx.step selects the pulse interval.
struct SseStepContext {
    int step = 0;
};

inline SdeSystem make_sse_system(const SsePlan& plan, int block_dim,
                                 const SseStepContext* ctx) {
    const int L = static_cast<int>(plan.gamma.size());
    SdeSystem sys;
    sys.dim = block_dim + L;
    const SsePlan* p = &plan;
    sys.drift = [p, ctx, block_dim, L](const CVec& y, CVec& out) {
        const int i = ctx->step;
        std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
        // psi block: C_i psi + sum_l u(-k) X_l (iS_l psi)
        const Matrix& c = p->c_step[i];
        for (int r = 0; r < block_dim; ++r) {
            cplx acc(0.0, 0.0);
            for (int q = 0; q < block_dim; ++q) acc += c(r, q) * y[q];
            out[r] = acc;
        }
        for (int l = 0; l < L; ++l) {
            const double cc = p->drift_scale[i][l];
            if (cc != 0.0) {
                const cplx xl = y[block_dim + l];
                p->i_s[l].apply_add_block(y, out, cc * xl.real(), block_dim);
            }
            out[block_dim + l] = -p->k[l] * y[block_dim + l].real();
        }
    };
    sys.diffusion.resize(L);
    for (int l = 0; l < L; ++l) {
        sys.diffusion[l] = [p, ctx, block_dim, l](const CVec& y, CVec& out) {
            const int i = ctx->step;
            std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
            p->i_s[l].apply_add_block(y, out, p->diff_scale[i][l], block_dim);
            out[block_dim + l] = p->gamma[l];
        };
    }
    return sys;
}

}  // namespace detail

// Sample (or accept) noise paths for every channel of a system.
inline std::vector<NoisePath> sample_channel_paths(const QubitSystem& sys, double dt,
                                                   int steps, std::uint64_t seed) {
    std::vector<NoisePath> paths;
    for (size_t l = 0; l < sys.channels.size(); ++l)
        paths.push_back(sample_path(sys.channels[l].spec, dt, steps,
                                    derive_seed(seed, l, 0xa11ceULL)));
    return paths;
}

// One noisy trajectory. phi must come from deterministic_states on the same
// pulse. When paths is supplied it must match the grid; otherwise paths are
// sampled from seed.
inline TrajectoryRecord propagate_sse_trajectory(
    const SsePlan& plan, const std::vector<CVec>& phi, const QuantumState& psi0,
    std::uint64_t seed, const std::vector<NoisePath>* paths_in = nullptr) {
    const QubitSystem& sys = *plan.sys;
    const int d = sys.dim();
    const int L = static_cast<int>(sys.channels.size());
    const int n = plan.pulse.steps();
    const double dt = plan.pulse.dt;

    std::vector<NoisePath> paths_local;
    const std::vector<NoisePath>* paths = paths_in;
    if (!paths) {
        paths_local = sample_channel_paths(sys, dt, n, seed);
        paths = &paths_local;
    }
    for (const auto& p : *paths)
        if (p.steps < n || std::abs(p.dt - dt) > 1e-15)
            throw ConfigError("propagate_sse: noise path grid mismatch");

    detail::SseStepContext ctx;
    SdeSystem sde = detail::make_sse_system(plan, d, &ctx);

    TrajectoryRecord rec;
    rec.dt = dt;
    rec.steps = n;
    rec.seed = seed;
    rec.fidelity.reserve(n + 1);
    rec.norm_drift.reserve(n);
    rec.x.assign(L, std::vector<double>(n + 1, 0.0));

    CVec y(d + L, cplx(0.0, 0.0));
    for (int i = 0; i < d; ++i) y[i] = psi0.amplitudes()[i];
    for (int l = 0; l < L; ++l) {
        y[d + l] = (*paths)[l].x[0];
        rec.x[l][0] = (*paths)[l].x[0];
    }

    const double sqdt = std::sqrt(dt);
    std::vector<double> draws(L), dws(L);
    CVec psi_view(d);

    auto record_state = [&](int idx) {
        for (int i = 0; i < d; ++i) psi_view[i] = y[i];
        rec.fidelity.push_back(fidelity(phi[idx], psi_view));
        if (plan.settings.store_states) {
            rec.psi.push_back(psi_view);
            rec.phi.push_back(phi[idx]);
        }
    };
    record_state(0);

    for (int i = 0; i < n; ++i) {
        ctx.step = i;
        for (int l = 0; l < L; ++l) {
            dws[l] = (*paths)[l].dw[i];
            draws[l] = dws[l] / sqdt;
        }
        y = (plan.settings.scheme == Scheme::euler)
                ? euler_maruyama_step(sde, y, dt, dws, i)
                : platen_step(sde, y, dt, draws, i);

        double nrm = 0.0;
        for (int r = 0; r < d; ++r) nrm += std::norm(y[r]);
        nrm = std::sqrt(nrm);
        const double drift = std::abs(nrm - 1.0);
        rec.norm_drift.push_back(drift);
        if (drift > plan.settings.norm_drift_limit)
            throw NumericalError(
                "propagate_sse: per-step norm drift " + std::to_string(drift) +
                    " exceeds limit; use a smaller dt",
                i);
        if (plan.settings.renormalize)
            for (int r = 0; r < d; ++r) y[r] /= nrm;
        for (int l = 0; l < L; ++l) rec.x[l][i + 1] = y[d + l].real();
        record_state(i + 1);
    }
    for (int r = 0; r < d; ++r) psi_view[r] = y[r];
    rec.psi_final = psi_view;
    return rec;
}

// Convenience wrapper building all shared pieces for a single trajectory.
inline TrajectoryRecord propagate_sse(const QubitSystem& sys, const ControlPulse& pulse,
                                      const QuantumState& psi0, const SseSettings& settings,
                                      std::uint64_t seed,
                                      const std::vector<NoisePath>* paths = nullptr) {
    SsePlan plan = build_sse_plan(sys, pulse, settings);
    DeterministicReference ref = build_reference(sys, pulse);
    const std::vector<CVec> phi = deterministic_states(ref, psi0.amplitudes());
    return propagate_sse_trajectory(plan, phi, psi0, seed, paths);
}

//============================================================================
// Unitary pair propagation (gate mode)
//============================================================================

struct UnitaryPairRecord {
    double dt = 0.0;
    int steps = 0;
    std::uint64_t seed = 0;
    std::vector<Matrix> u;         // noisy, stored when store_states
    std::vector<Matrix> v;         // noiseless, stored when store_states
    std::vector<cplx> trace_q;     // Tr[V_t^dag U_t] at grid points
    std::vector<double> norm_drift;
    Matrix u_final, v_final;
};

// U follows the SSE lifted to operators; V is the exact noiseless unitary.
inline UnitaryPairRecord propagate_unitary_pair(
    const SsePlan& plan, const DeterministicReference& ref, std::uint64_t seed,
    const std::vector<NoisePath>* paths_in = nullptr) {
    const QubitSystem& sys = *plan.sys;
    const int d = sys.dim();
    const int L = static_cast<int>(sys.channels.size());
    const int n = plan.pulse.steps();
    const double dt = plan.pulse.dt;

    std::vector<NoisePath> paths_local;
    const std::vector<NoisePath>* paths = paths_in;
    if (!paths) {
        paths_local = sample_channel_paths(sys, dt, n, seed);
        paths = &paths_local;
    }

    detail::SseStepContext ctx;
    // Operator SSE: treat U column-by-column; the augmented state holds all
    // d columns then the X slots.
    const int block = d * d;
    SdeSystem sde;
    sde.dim = block + L;
    const SsePlan* p = &plan;
    sde.drift = [p, &ctx, d, block, L](const CVec& y, CVec& out) {
        const int i = ctx.step;
        std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
        const Matrix& c = p->c_step[i];
        for (int col = 0; col < d; ++col)
            for (int r = 0; r < d; ++r) {
                cplx acc(0.0, 0.0);
                for (int q = 0; q < d; ++q) acc += c(r, q) * y[q * d + col];
                out[r * d + col] = acc;
            }
        for (int l = 0; l < L; ++l) {
            const double cc = p->drift_scale[i][l];
            if (cc != 0.0) {
                const double xl = y[block + l].real();
                const Matrix& is = p->i_s[l];
                for (int col = 0; col < d; ++col)
                    for (int r = 0; r < d; ++r) {
                        cplx acc(0.0, 0.0);
                        for (int q = 0; q < d; ++q) acc += is(r, q) * y[q * d + col];
                        out[r * d + col] += cc * xl * acc;
                    }
            }
            out[block + l] = -p->k[l] * y[block + l].real();
        }
    };
    sde.diffusion.resize(L);
    for (int l = 0; l < L; ++l) {
        sde.diffusion[l] = [p, &ctx, d, block, l](const CVec& y, CVec& out) {
            const int i = ctx.step;
            std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
            const double sc = p->diff_scale[i][l];
            const Matrix& is = p->i_s[l];
            for (int col = 0; col < d; ++col)
                for (int r = 0; r < d; ++r) {
                    cplx acc(0.0, 0.0);
                    for (int q = 0; q < d; ++q) acc += is(r, q) * y[q * d + col];
                    out[r * d + col] = sc * acc;
                }
            out[block + l] = p->gamma[l];
        };
    }

    UnitaryPairRecord rec;
    rec.dt = dt;
    rec.steps = n;
    rec.seed = seed;

    CVec y(block + L, cplx(0.0, 0.0));
    for (int i = 0; i < d; ++i) y[i * d + i] = 1.0;
    for (int l = 0; l < L; ++l) y[block + l] = (*paths)[l].x[0];

    auto to_matrix = [&](const CVec& state) {
        Matrix m(d, d);
        for (int r = 0; r < d; ++r)
            for (int col = 0; col < d; ++col) m(r, col) = state[r * d + col];
        return m;
    };

    auto record = [&](int idx) {
        Matrix u = to_matrix(y);
        const Matrix& v = ref.prefix[idx];
        rec.trace_q.push_back((v.adjoint() * u).trace());
        if (plan.settings.store_states) {
            rec.u.push_back(u);
            rec.v.push_back(v);
        }
        if (idx == n) {
            rec.u_final = u;
            rec.v_final = v;
        }
    };
    record(0);

    const double sqdt = std::sqrt(dt);
    std::vector<double> draws(L), dws(L);
    for (int i = 0; i < n; ++i) {
        ctx.step = i;
        for (int l = 0; l < L; ++l) {
            dws[l] = (*paths)[l].dw[i];
            draws[l] = dws[l] / sqdt;
        }
        y = (plan.settings.scheme == Scheme::euler)
                ? euler_maruyama_step(sde, y, dt, dws, i)
                : platen_step(sde, y, dt, draws, i);
        // Column norms drift at the same rate as the state version; track the
        // worst column.
        double worst = 0.0;
        for (int col = 0; col < d; ++col) {
            double nrm = 0.0;
            for (int r = 0; r < d; ++r) nrm += std::norm(y[r * d + col]);
            worst = std::max(worst, std::abs(std::sqrt(nrm) - 1.0));
        }
        rec.norm_drift.push_back(worst);
        if (worst > plan.settings.norm_drift_limit)
            throw NumericalError("propagate_unitary_pair: norm drift exceeds limit", i);
        if (plan.settings.renormalize) {
            // Re-unitarize columns by modified Gram-Schmidt to keep U unitary.
            for (int col = 0; col < d; ++col) {
                for (int prev = 0; prev < col; ++prev) {
                    cplx proj(0.0, 0.0);
                    for (int r = 0; r < d; ++r)
                        proj += std::conj(y[r * d + prev]) * y[r * d + col];
                    for (int r = 0; r < d; ++r) y[r * d + col] -= proj * y[r * d + prev];
                }
                double nrm = 0.0;
                for (int r = 0; r < d; ++r) nrm += std::norm(y[r * d + col]);
                nrm = std::sqrt(nrm);
                for (int r = 0; r < d; ++r) y[r * d + col] /= nrm;
            }
        }
        record(i + 1);
    }
    return rec;
}

inline UnitaryPairRecord propagate_unitary_pair(const QubitSystem& sys,
                                                const ControlPulse& pulse,
                                                const SseSettings& settings,
                                                std::uint64_t seed) {
    SsePlan plan = build_sse_plan(sys, pulse, settings);
    DeterministicReference ref = build_reference(sys, pulse);
    return propagate_unitary_pair(plan, ref, seed);
}

//============================================================================
// Ensembles
//============================================================================

// Mean density matrix rho_t = mean(psi psi^dag) over stored records.
inline std::vector<Matrix> ensemble_density(const std::vector<TrajectoryRecord>& records) {
    if (records.empty()) throw ConfigError("ensemble_density: no records");
    const auto& first = records.front();
    if (first.psi.empty())
        throw ConfigError("ensemble_density: records were not stored with store_states");
    for (const auto& r : records)
        if (r.steps != first.steps || std::abs(r.dt - first.dt) > 1e-15)
            throw ConfigError("ensemble_density: mismatched grids");
    const int d = static_cast<int>(first.psi[0].size());
    std::vector<Matrix> rho(first.steps + 1, Matrix::zero(d, d));
    for (const auto& r : records)
        for (int t = 0; t <= first.steps; ++t)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    rho[t](a, b) += r.psi[t][a] * std::conj(r.psi[t][b]);
    const cplx w(1.0 / static_cast<double>(records.size()), 0.0);
    for (auto& m : rho) m *= w;
    return rho;
}

struct EnsembleStats {
    std::vector<double> mean_fidelity;   // per grid point
    std::vector<double> sem_fidelity;    // standard error of the mean
    double mean_energy = 0.0;            // Re psi_T^dag H psi_T when H given
    double sem_energy = 0.0;
    int rho_stride = 0;
    std::vector<Matrix> mean_rho;        // at stride points when requested
    long trials = 0;
};

// Trial-parallel ensemble with fixed-chunk deterministic reduction. Noise is
// drawn per trial from derive_seed(master_seed, trial).
inline EnsembleStats run_sse_ensemble(const QubitSystem& sys, const ControlPulse& pulse,
                                      const QuantumState& psi0, const SseSettings& settings_in,
                                      long trials, std::uint64_t master_seed,
                                      const Matrix* energy_observable = nullptr,
                                      int rho_stride = 0, int threads = 0) {
    SseSettings settings = settings_in;
    settings.store_states = rho_stride > 0;
    SsePlan plan = build_sse_plan(sys, pulse, settings);
    DeterministicReference ref = build_reference(sys, pulse);
    const std::vector<CVec> phi = deterministic_states(ref, psi0.amplitudes());

    const int n = pulse.steps();
    const int d = sys.dim();
    const long chunk = 32;
    const long nchunks = (trials + chunk - 1) / chunk;

    struct Partial {
        std::vector<double> f_sum, f2_sum;
        double e_sum = 0.0, e2_sum = 0.0;
        std::vector<Matrix> rho_sum;
    };
    std::vector<Partial> partials(nchunks);
    const int nstore = rho_stride > 0 ? n / rho_stride + 1 : 0;

    parallel_for(nchunks, threads, [&](long ci) {
        Partial part;
        part.f_sum.assign(n + 1, 0.0);
        part.f2_sum.assign(n + 1, 0.0);
        if (rho_stride > 0) part.rho_sum.assign(nstore, Matrix::zero(d, d));
        const long lo = ci * chunk;
        const long hi = std::min(trials, lo + chunk);
        for (long t = lo; t < hi; ++t) {
            TrajectoryRecord rec =
                propagate_sse_trajectory(plan, phi, psi0, derive_seed(master_seed, t));
            for (int i = 0; i <= n; ++i) {
                part.f_sum[i] += rec.fidelity[i];
                part.f2_sum[i] += rec.fidelity[i] * rec.fidelity[i];
            }
            if (energy_observable) {
                const CVec hp = energy_observable->apply(rec.psi_final);
                const double e = std::real(inner(rec.psi_final, hp));
                part.e_sum += e;
                part.e2_sum += e * e;
            }
            if (rho_stride > 0)
                for (int si = 0; si < nstore; ++si) {
                    const CVec& ps = rec.psi[static_cast<size_t>(si) * rho_stride];
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b)
                            part.rho_sum[si](a, b) += ps[a] * std::conj(ps[b]);
                }
        }
        partials[ci] = std::move(part);
    });

    EnsembleStats out;
    out.trials = trials;
    out.rho_stride = rho_stride;
    out.mean_fidelity.assign(n + 1, 0.0);
    out.sem_fidelity.assign(n + 1, 0.0);
    std::vector<double> f2(n + 1, 0.0);
    double e_sum = 0.0, e2_sum = 0.0;
    if (rho_stride > 0) out.mean_rho.assign(nstore, Matrix::zero(d, d));
    for (const auto& part : partials) {
        for (int i = 0; i <= n; ++i) {
            out.mean_fidelity[i] += part.f_sum[i];
            f2[i] += part.f2_sum[i];
        }
        e_sum += part.e_sum;
        e2_sum += part.e2_sum;
        for (size_t si = 0; si < part.rho_sum.size(); ++si)
            out.mean_rho[si] += part.rho_sum[si];
    }
    const double nt = static_cast<double>(trials);
    for (int i = 0; i <= n; ++i) {
        out.mean_fidelity[i] /= nt;
        const double var = std::max(0.0, f2[i] / nt - out.mean_fidelity[i] * out.mean_fidelity[i]);
        out.sem_fidelity[i] = std::sqrt(var / nt);
    }
    if (energy_observable) {
        out.mean_energy = e_sum / nt;
        const double var = std::max(0.0, e2_sum / nt - out.mean_energy * out.mean_energy);
        out.sem_energy = std::sqrt(var / nt);
    }
    for (auto& m : out.mean_rho) m *= cplx(1.0 / nt, 0.0);
    return out;
}

//============================================================================
// Lindblad reference (white noise only)
//============================================================================

// RK4 integration of d rho/dt = i[H, rho] + sum_l g_l^2 (S rho S - 1/2 {S^2, rho}),
// the ensemble equation matching the +iH convention of the propagators above.
inline std::vector<Matrix> lindblad_reference(const QubitSystem& sys,
                                              const ControlPulse& pulse,
                                              const Matrix& rho0, int substeps = 4) {
    sys.validate();
    for (const auto& c : sys.channels)
        if (c.spec.kind == NoiseKind::ou && c.spec.k > kWhiteLimit)
            throw ConfigError("lindblad_reference: OU channels are not supported");
    const int n = pulse.steps();
    std::vector<Matrix> s2;
    for (const auto& c : sys.channels) s2.push_back(c.op * c.op);

    auto rhs = [&](const Matrix& h, const Matrix& rho) {
        Matrix out = commutator(h, rho);
        out *= cplx(0.0, 1.0);
        for (size_t l = 0; l < sys.channels.size(); ++l) {
            const double g2 = sys.channels[l].spec.gamma * sys.channels[l].spec.gamma;
            Matrix diss = sys.channels[l].op * rho * sys.channels[l].op;
            Matrix ac = anticommutator(s2[l], rho);
            ac *= cplx(0.5, 0.0);
            diss -= ac;
            diss *= cplx(g2, 0.0);
            out += diss;
        }
        return out;
    };

    std::vector<Matrix> series;
    series.reserve(n + 1);
    series.push_back(rho0);
    Matrix rho = rho0;
    const double h = pulse.dt / substeps;
    for (int i = 0; i < n; ++i) {
        const Matrix ham = assemble_hamiltonian(sys, pulse, i);
        for (int s = 0; s < substeps; ++s) {
            Matrix k1 = rhs(ham, rho);
            Matrix y2 = rho;
            y2 += k1 * cplx(0.5 * h, 0.0);
            Matrix k2 = rhs(ham, y2);
            Matrix y3 = rho;
            y3 += k2 * cplx(0.5 * h, 0.0);
            Matrix k3 = rhs(ham, y3);
            Matrix y4 = rho;
            y4 += k3 * cplx(h, 0.0);
            Matrix k4 = rhs(ham, y4);
            k2 *= cplx(2.0, 0.0);
            k3 *= cplx(2.0, 0.0);
            Matrix sum = k1 + k2 + k3 + k4;
            sum *= cplx(h / 6.0, 0.0);
            rho += sum;
        }
        series.push_back(rho);
    }
    return series;
}

// 1/2 * sum |eigenvalues| of the Hermitian difference.
inline double trace_distance(const Matrix& a, const Matrix& b) {
    Matrix diff = a - b;
    // Symmetrize away numerical anti-Hermitian residue before decomposing.
    Matrix herm = diff + diff.adjoint();
    herm *= cplx(0.5, 0.0);
    auto eig = hermitian_eig(herm);
    double s = 0.0;
    for (double v : eig.values) s += std::abs(v);
    return 0.5 * s;
}

//============================================================================
// Multi-qubit factoring check
//============================================================================

struct FactoringResult {
    std::vector<double> joint;     // n-qubit fidelity series
    std::vector<double> product;   // product of single-qubit fidelities
    double max_difference = 0.0;
};

// Joint simulation of H = sum_j A_j, S = sum_j Q_j (single-qubit operators
// embedded in an n-qubit register, one shared noise path) against the product
// of independent single-qubit simulations driven by the same path.
inline FactoringResult factoring_check(const std::vector<Matrix>& qubit_h,
                                       const std::vector<Matrix>& qubit_q,
                                       const NoiseSpec& spec, const NoisePath& path,
                                       const std::vector<CVec>& qubit_psi0,
                                       Scheme scheme = Scheme::platen) {
    const int nq = static_cast<int>(qubit_h.size());
    if (nq < 1 || qubit_q.size() != qubit_h.size() || qubit_psi0.size() != qubit_h.size())
        throw ConfigError("factoring_check: per-qubit lists must have equal nonzero size");

    SseSettings settings;
    settings.scheme = scheme;
    settings.renormalize = false;  // compare raw discretizations

    auto embed = [&](const Matrix& op, int target) {
        Matrix out = target == 0 ? op : Matrix::identity(1 << target);
        if (target == 0) {
            for (int q = 1; q < nq; ++q) out = kron(out, Matrix::identity(2));
            return out;
        }
        out = kron(out, op);
        for (int q = target + 1; q < nq; ++q) out = kron(out, Matrix::identity(2));
        return out;
    };

    const int n = path.steps;
    const ControlPulse pulse = ControlPulse::zero(0, n, path.dt);
    const std::vector<NoisePath> shared{path};

    FactoringResult out;
    out.product.assign(n + 1, 1.0);

    CVec joint_psi0{cplx(1.0, 0.0)};
    for (int q = 0; q < nq; ++q) {
        QubitSystem single;
        single.n_qubits = 1;
        single.drift = qubit_h[q];
        single.channels.push_back({qubit_q[q], spec, -1});
        TrajectoryRecord rec = propagate_sse(single, pulse, QuantumState(qubit_psi0[q]),
                                             settings, path.seed, &shared);
        for (int i = 0; i <= n; ++i) out.product[i] *= rec.fidelity[i];

        CVec next(joint_psi0.size() * 2);
        for (size_t a = 0; a < joint_psi0.size(); ++a) {
            next[2 * a] = joint_psi0[a] * qubit_psi0[q][0];
            next[2 * a + 1] = joint_psi0[a] * qubit_psi0[q][1];
        }
        joint_psi0 = std::move(next);
    }

    QubitSystem joint;
    joint.n_qubits = nq;
    Matrix hsum = Matrix::zero(1 << nq, 1 << nq);
    Matrix ssum = Matrix::zero(1 << nq, 1 << nq);
    for (int q = 0; q < nq; ++q) {
        hsum += embed(qubit_h[q], q);
        ssum += embed(qubit_q[q], q);
    }
    joint.drift = hsum;
    joint.channels.push_back({ssum, spec, -1});
    TrajectoryRecord rec = propagate_sse(joint, pulse, QuantumState(joint_psi0),
                                         settings, path.seed, &shared);
    out.joint = rec.fidelity;

    for (int i = 0; i <= n; ++i)
        out.max_difference = std::max(out.max_difference,
                                      std::abs(out.joint[i] - out.product[i]));
    return out;
}

}  // namespace fvqoc

#pragma once

// Descent loop for noise-aware pulse construction: per iteration, the
// deterministic J1+J2 gradient plus a Monte Carlo mean of per-realization J3
// gradients, a fixed step size with backtracking halving (cost re-evaluated
// under common random numbers), and a schedule that drops the fidelity
// weight mu to zero after a configured iteration. With mu = 0 the loop is
// plain noise-ignorant optimization over the deterministic cost.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/gradient.hpp"
#include "fvqoc/linalg.hpp"
#include "fvqoc/parallel.hpp"
#include "fvqoc/sse.hpp"
#include "fvqoc/transfer.hpp"

namespace fvqoc {

enum class TargetKind { hamiltonian, unitary };

struct OptimizationProblem {
    QubitSystem system;
    TargetKind target_kind = TargetKind::hamiltonian;
    Matrix target;  // H_targ or U_targ
    QuantumState phi0;
    double horizon = 1.0;
    int steps = 100;
    CostWeights weights;
    ScalingMode scaling = ScalingMode::fixed;
    int mu_zero_after = 10;       // iterations after which mu -> 0
    int iterations = 25;
    int grad_trials = 100;        // Monte Carlo trials per gradient
    int eval_trials = 200;        // trajectories for the final error estimate
    double step_size = 0.5;
    double init_amplitude = 0.1;  // initial pulse ~ U[-a, a] per grid point
    std::uint64_t master_seed = 1;
    Scheme scheme = Scheme::platen;
    int threads = 0;

    double dt() const { return horizon / steps; }

    void validate() const {
        system.validate();
        if (steps < 1 || horizon <= 0.0) throw ConfigError("problem: bad grid");
        if (grad_trials < 1 || eval_trials < 1) throw ConfigError("problem: trials must be >= 1");
        if (weights.lambda < 0 || weights.mu < 0 || weights.nu < 0)
            throw ConfigError("problem: weights must be nonnegative");
        if (target_kind == TargetKind::hamiltonian && !target.is_hermitian(1e-10))
            throw ConfigError("problem: Hamiltonian target must be Hermitian");
        if (target_kind == TargetKind::unitary && !target.is_unitary(1e-8))
            throw ConfigError("problem: unitary target must be unitary");
        if (static_cast<int>(system.controls.size()) < 1)
            throw ConfigError("problem: need at least one control Hamiltonian");
    }
};

struct IterationStat {
    int iteration = 0;
    double cost = 0.0;        // J1 + J2 + J3-estimate before the update
    double j1 = 0.0, j2 = 0.0, j3 = 0.0;
    double mean_fidelity = 0.0;   // terminal fidelity over gradient trials
    double mean_energy = 0.0;     // Re psi_T^dag H_targ psi_T over trials
    double sem_energy = 0.0;
    double grad_norm = 0.0;
    double step_size = 0.0;
    double mu_effective = 0.0;
    ControlPulse pulse;       // iterate before the update
};

struct RunHistory {
    std::vector<IterationStat> iterations;
    ControlPulse final_pulse;
    double final_error = 0.0;   // J_err estimate at the final pulse
    double final_error_sem = 0.0;
};

//============================================================================
// Error evaluation
//============================================================================

// J_err = E[psi_T^dag H_targ psi_T] - E_targ via independent trajectories.
inline std::pair<double, double> evaluate_error(const OptimizationProblem& prob,
                                                const ControlPulse& pulse, long trials,
                                                std::uint64_t seed) {
    if (prob.target_kind != TargetKind::hamiltonian)
        throw ConfigError("evaluate_error: requires a Hamiltonian target");
    SseSettings settings;
    settings.scheme = prob.scheme;
    settings.scaling = prob.scaling;
    EnsembleStats stats = run_sse_ensemble(prob.system, pulse, prob.phi0, settings, trials,
                                           seed, &prob.target, 0, prob.threads);
    const double e_targ = hermitian_eig(prob.target).values.front();
    return {stats.mean_energy - e_targ, stats.sem_energy};
}

//============================================================================
// mu auto-scaling
//============================================================================

// mu = ||grad J1(z0)|| / ||grad J3(z0)||, the balance making both cost terms
// contribute at the same order.
inline double mu_autoscale(const OptimizationProblem& prob, const ControlPulse& z0) {
    prob.validate();
    PulseGrid g1;
    if (prob.target_kind == TargetKind::hamiltonian)
        g1 = vqoc_gradient(prob.system, prob.target, z0, prob.phi0, 0.0);
    else
        g1 = gate_overlap_gradient(prob.system, prob.target, z0);

    TransferSystem ts = build_transfer_system(prob.system, pauli_basis(prob.system.n_qubits));
    EtaState eta0 = prob.target_kind == TargetKind::hamiltonian
                        ? eta_from_states(ts.basis, prob.phi0.amplitudes(), prob.phi0.amplitudes())
                        : gate_eta_init(prob.system.n_qubits);
    CostWeights unit = prob.weights;
    unit.mu = 1.0;

    const long trials = prob.grad_trials;
    std::vector<PulseGrid> samples(trials);
    parallel_for(trials, prob.threads, [&](long t) {
        samples[t] = fvqoc_gradient_trial(ts, prob.system, z0, eta0, unit, prob.scaling,
                                          derive_seed(prob.master_seed, t, 0xbababaULL),
                                          nullptr, prob.scheme)
                         .g;
    });
    PulseGrid g3 = zero_grid(z0.channels(), z0.steps());
    for (const auto& s : samples) grid_axpy(g3, s, 1.0 / trials);

    const double n1 = grid_norm(g1);
    const double n3 = grid_norm(g3);
    if (n3 < 1e-12 * std::max(1.0, n1))
        throw NumericalError("mu_autoscale: J3 gradient vanishes; supply mu explicitly");
    return n1 / n3;
}

//============================================================================
// The descent loop
//============================================================================

namespace detail {

struct TrialBatch {
    PulseGrid mean_g;
    double mean_j3 = 0.0;
    double mean_f = 0.0;
    double mean_e = 0.0, sem_e = 0.0;
};

// One Monte Carlo pass at a given pulse: mean J3 gradient plus diagnostics.
// Seeds depend only on (master, iteration, trial), so re-evaluating at a
// trial pulse reuses the same noise (common random numbers).
inline TrialBatch run_trials(const OptimizationProblem& prob, const TransferSystem& ts,
                             const EtaState& eta0, const ControlPulse& pulse,
                             const CostWeights& weights, int iteration, bool want_grad,
                             bool want_energy) {
    const long trials = prob.grad_trials;
    struct PerTrial {
        PulseGrid g;
        double j3 = 0.0, f = 0.0, e = 0.0;
    };
    std::vector<PerTrial> results(trials);

    SsePlan plan;
    DeterministicReference ref;
    std::vector<CVec> phi;
    if (want_energy && prob.target_kind == TargetKind::hamiltonian) {
        SseSettings st;
        st.scheme = prob.scheme;
        st.scaling = prob.scaling;
        plan = build_sse_plan(prob.system, pulse, st);
        ref = build_reference(prob.system, pulse);
        phi = deterministic_states(ref, prob.phi0.amplitudes());
    }

    parallel_for(trials, prob.threads, [&](long t) {
        const std::uint64_t seed = derive_seed(prob.master_seed, iteration, t);
        const auto paths = sample_channel_paths(prob.system, pulse.dt, pulse.steps(), seed);
        PerTrial r;
        if (want_grad) {
            GradientSample gs = fvqoc_gradient_trial(ts, prob.system, pulse, eta0, weights,
                                                     prob.scaling, seed, &paths, prob.scheme);
            r.g = std::move(gs.g);
            r.j3 = gs.j3;
            r.f = gs.f_terminal;
        } else {
            // Cost-only pass: propagate eta without the solution operator.
            EtaSettings es;
            es.scheme = prob.scheme;
            es.scaling = prob.scaling;
            es.want_phi = false;
            EtaTrajectory traj = propagate_eta(ts, prob.system, pulse, eta0, es, seed, &paths);
            double f_int = 0.0;
            std::vector<double> series(traj.steps + 1);
            for (int i = 0; i <= traj.steps; ++i)
                series[i] = eta0.mode == EtaMode::gate ? std::real(traj.eta[i][0])
                                                       : traj.fidelity[i];
            for (int i = 0; i < traj.steps; ++i)
                f_int += 0.5 * traj.dt * (series[i] + series[i + 1]);
            r.f = series[traj.steps];
            r.j3 = -weights.mu * (r.f + weights.nu * f_int);
        }
        if (want_energy && prob.target_kind == TargetKind::hamiltonian) {
            TrajectoryRecord rec = propagate_sse_trajectory(plan, phi, prob.phi0, seed, &paths);
            r.e = std::real(inner(rec.psi_final, prob.target.apply(rec.psi_final)));
        }
        results[t] = std::move(r);
    });

    TrialBatch batch;
    batch.mean_g = zero_grid(pulse.channels(), pulse.steps());
    double e2 = 0.0;
    for (const auto& r : results) {
        if (want_grad) grid_axpy(batch.mean_g, r.g, 1.0 / trials);
        batch.mean_j3 += r.j3 / trials;
        batch.mean_f += r.f / trials;
        batch.mean_e += r.e / trials;
        e2 += r.e * r.e / trials;
    }
    batch.sem_e = std::sqrt(std::max(0.0, e2 - batch.mean_e * batch.mean_e) /
                            static_cast<double>(trials));
    return batch;
}

}  // namespace detail

inline RunHistory optimize(const OptimizationProblem& prob) {
    prob.validate();
    const int nj = static_cast<int>(prob.system.controls.size());
    ControlPulse z = ControlPulse::random_uniform(nj, prob.steps, prob.dt(),
                                                  prob.init_amplitude, prob.master_seed);

    TransferSystem ts = build_transfer_system(prob.system, pauli_basis(prob.system.n_qubits));
    const EtaState eta0 =
        prob.target_kind == TargetKind::hamiltonian
            ? eta_from_states(ts.basis, prob.phi0.amplitudes(), prob.phi0.amplitudes())
            : gate_eta_init(prob.system.n_qubits);

    auto deterministic_cost = [&](const ControlPulse& p) {
        const double j1 = prob.target_kind == TargetKind::hamiltonian
                              ? j1_state_cost(prob.system, prob.target, p, prob.phi0)
                              : j1_gate_cost(prob.system, prob.target, p);
        return std::make_pair(j1, j2_cost(p, prob.weights.lambda));
    };
    auto deterministic_grad = [&](const ControlPulse& p) {
        if (prob.target_kind == TargetKind::hamiltonian)
            return vqoc_gradient(prob.system, prob.target, p, prob.phi0, prob.weights.lambda);
        PulseGrid g = gate_overlap_gradient(prob.system, prob.target, p);
        for (int j = 0; j < p.channels(); ++j)
            for (int i = 0; i < p.steps(); ++i)
                g[j][i] += prob.weights.lambda * p.z[j][i];
        return g;
    };

    RunHistory history;
    double alpha = prob.step_size;

    for (int it = 0; it < prob.iterations; ++it) {
        CostWeights weights = prob.weights;
        if (prob.mu_zero_after >= 0 && it >= prob.mu_zero_after) weights.mu = 0.0;
        const bool stochastic = weights.mu > 0.0 && !prob.system.channels.empty();

        const auto [j1, j2v] = deterministic_cost(z);
        PulseGrid grad = deterministic_grad(z);
        double j3 = 0.0;
        IterationStat stat;
        if (stochastic) {
            detail::TrialBatch batch =
                detail::run_trials(prob, ts, eta0, z, weights, it, true, true);
            grid_axpy(grad, batch.mean_g, 1.0);
            j3 = batch.mean_j3;
            stat.mean_fidelity = batch.mean_f;
            stat.mean_energy = batch.mean_e;
            stat.sem_energy = batch.sem_e;
        } else if (prob.target_kind == TargetKind::hamiltonian) {
            // Noise-free diagnostics from the deterministic state.
            const auto phi = propagate_deterministic(prob.system, z, prob.phi0);
            stat.mean_fidelity = 1.0;
            stat.mean_energy = std::real(inner(phi.back(), prob.target.apply(phi.back())));
            stat.sem_energy = 0.0;
        }
        const double cost = j1 + j2v + j3;
        if (!std::isfinite(cost))
            throw NumericalError("optimize: non-finite cost at iteration " + std::to_string(it), it);

        stat.iteration = it;
        stat.cost = cost;
        stat.j1 = j1;
        stat.j2 = j2v;
        stat.j3 = j3;
        stat.grad_norm = grid_norm(grad);
        stat.mu_effective = weights.mu;
        stat.pulse = z;

        // Backtracking on the CRN-evaluated cost.
        double used_alpha = alpha;
        ControlPulse candidate = z;
        for (int tries = 0;; ++tries) {
            candidate = z;
            for (int j = 0; j < nj; ++j)
                for (int i = 0; i < prob.steps; ++i)
                    candidate.z[j][i] -= used_alpha * grad[j][i];
            const auto [c1, c2] = deterministic_cost(candidate);
            double c3 = 0.0;
            if (stochastic)
                c3 = detail::run_trials(prob, ts, eta0, candidate, weights, it, false, false)
                         .mean_j3;
            const double cand_cost = c1 + c2 + c3;
            if (std::isfinite(cand_cost) && cand_cost <= cost) break;
            used_alpha *= 0.5;
            if (tries >= 12)
                break;  // accept the tiny step; the iterate barely moves
        }
        stat.step_size = used_alpha;
        history.iterations.push_back(std::move(stat));
        z = candidate;
    }

    history.final_pulse = z;
    if (prob.target_kind == TargetKind::hamiltonian) {
        const auto [err, sem] =
            evaluate_error(prob, z, prob.eval_trials, derive_seed(prob.master_seed, 0xe7a1ULL));
        history.final_error = err;
        history.final_error_sem = sem;
    }
    return history;
}

//============================================================================
// Random problems and the benchmark protocol
//============================================================================

// Random 1-qubit target Hamiltonian with full Pauli control, OU control
// noise of uniform random strength gamma_i in [0, noise_bound], k = 0.1.
inline OptimizationProblem random_problem(std::uint64_t seed, double noise_bound) {
    if (noise_bound <= 0.0) throw ConfigError("random_problem: noise_bound must be > 0");
    OptimizationProblem prob;
    prob.system.n_qubits = 1;
    prob.system.controls = {pauli_x(), pauli_y(), pauli_z()};
    Rng rng(derive_seed(seed, 0x9a0bULL));
    const Matrix ops[3] = {pauli_x(), pauli_y(), pauli_z()};
    for (int i = 0; i < 3; ++i) {
        const double gamma = rng.uniform(0.0, noise_bound);
        prob.system.channels.push_back({ops[i], NoiseSpec::ou(gamma, 0.1), i});
    }
    prob.target_kind = TargetKind::hamiltonian;
    prob.target = random_hermitian(2, derive_seed(seed, 0x7a26ULL));
    prob.phi0 = QuantumState::ket("0");
    prob.horizon = 1.0;
    prob.steps = 100;
    prob.weights = {0.1, 250.0, 1.0};
    prob.mu_zero_after = 25;
    prob.iterations = 45;
    prob.grad_trials = 100;
    prob.eval_trials = 200;
    prob.step_size = 0.3;
    prob.init_amplitude = 0.1;
    prob.master_seed = seed;
    return prob;
}

struct BenchmarkRow {
    std::uint64_t problem_seed = 0;
    double err_vqoc = 0.0, sem_vqoc = 0.0;
    double err_end = 0.0, sem_end = 0.0;     // mu > 0, nu = 0
    double err_cont = 0.0, sem_cont = 0.0;   // mu > 0, nu > 0
    double rel_end = 0.0, rel_cont = 0.0;    // (err_f - err_v)/err_v
};

struct BenchmarkSummary {
    std::vector<BenchmarkRow> rows;
    double win_rate_end = 0.0, win_rate_cont = 0.0;
    double mean_rel_end = 0.0, mean_rel_cont = 0.0;
};

// Runs VQOC (mu=0), end-cost F-VQOC (nu=0) and continuous-cost F-VQOC per
// random problem and reports relative error changes. Evaluation trials use
// common random numbers across the three methods.
inline BenchmarkSummary benchmark_relative_error(
    int n_problems, std::uint64_t seed, double noise_bound = 0.1,
    ScalingMode scaling = ScalingMode::fixed, int threads = 0,
    const std::function<void(const BenchmarkRow&)>& on_row = nullptr) {
    if (n_problems < 1) throw ConfigError("benchmark_relative_error: need n_problems >= 1");
    BenchmarkSummary summary;
    for (int p = 0; p < n_problems; ++p) {
        OptimizationProblem base = random_problem(derive_seed(seed, p, 0xbe7cULL), noise_bound);
        base.scaling = scaling;
        base.threads = threads;
        if (scaling == ScalingMode::scaled) {
            base.weights.mu = 60.0;
            base.mu_zero_after = 15;
        }

        OptimizationProblem vqoc = base;
        vqoc.weights.mu = 0.0;
        OptimizationProblem endcost = base;
        endcost.weights.nu = 0.0;
        OptimizationProblem cont = base;

        BenchmarkRow row;
        row.problem_seed = base.master_seed;
        RunHistory hv = optimize(vqoc);
        RunHistory he = optimize(endcost);
        RunHistory hc = optimize(cont);
        row.err_vqoc = hv.final_error;
        row.sem_vqoc = hv.final_error_sem;
        row.err_end = he.final_error;
        row.sem_end = he.final_error_sem;
        row.err_cont = hc.final_error;
        row.sem_cont = hc.final_error_sem;
        const double denom = std::max(std::abs(row.err_vqoc), 1e-12);
        row.rel_end = (row.err_end - row.err_vqoc) / denom;
        row.rel_cont = (row.err_cont - row.err_vqoc) / denom;
        summary.rows.push_back(row);
        if (on_row) on_row(row);
    }
    int wins_end = 0, wins_cont = 0;
    for (const auto& r : summary.rows) {
        if (r.err_end < r.err_vqoc) ++wins_end;
        if (r.err_cont < r.err_vqoc) ++wins_cont;
        summary.mean_rel_end += r.rel_end / summary.rows.size();
        summary.mean_rel_cont += r.rel_cont / summary.rows.size();
    }
    summary.win_rate_end = static_cast<double>(wins_end) / summary.rows.size();
    summary.win_rate_cont = static_cast<double>(wins_cont) / summary.rows.size();
    return summary;
}

}  // namespace fvqoc

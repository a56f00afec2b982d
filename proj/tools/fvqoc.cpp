// Command-line front end: simulation ensembles, pulse optimization, gate
// construction, randomized benchmarks, analytic-oracle checks and
// integrator convergence studies. Every run writes a self-contained output
// directory: config echo, seed manifest, result CSVs and a JSON summary.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "fvqoc/convergence.hpp"
#include "fvqoc/fvqoc.hpp"

using namespace fvqoc;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    long trials = 0;
    long seed = -1;  // -1: keep config value
    int threads = 0;
};

RunConfig load_run_config(const CommonArgs& args) {
    RunConfig rc = load_config(args.config_path);
    if (!args.out_dir.empty()) rc.output_dir = args.out_dir;
    if (args.trials > 0) rc.trials = args.trials;
    if (args.seed >= 0) {
        rc.seed = static_cast<std::uint64_t>(args.seed);
        rc.problem.master_seed = rc.seed;
    }
    if (args.threads > 0) rc.threads = args.threads;
    rc.problem.threads = resolve_threads(rc.threads);
    return rc;
}

void write_provenance(const std::string& dir, const json& echo, std::uint64_t seed,
                      const std::string& note) {
    ensure_dir(dir);
    write_text_atomic(dir + "/config_echo.json", echo.dump(2) + "\n");
    std::string manifest = "master_seed=" + std::to_string(seed) + "\n" +
                           "derivation=derive_seed(master, stream indices)\n" + note + "\n";
    write_text_atomic(dir + "/seeds.txt", manifest);
}

std::vector<double> time_grid(const ControlPulse& pulse) {
    std::vector<double> t(pulse.steps() + 1);
    for (int i = 0; i <= pulse.steps(); ++i) t[i] = i * pulse.dt;
    return t;
}

//----------------------------------------------------------------------------
// simulate
//----------------------------------------------------------------------------

int run_simulate(const RunConfig& rc, int dump_count) {
    const OptimizationProblem& prob = rc.problem;
    const long trials = rc.trials > 0 ? rc.trials : 1000;
    ControlPulse pulse = ControlPulse::random_uniform(
        static_cast<int>(prob.system.controls.size()), prob.steps, prob.dt(),
        prob.init_amplitude, prob.master_seed);

    SseSettings settings;
    settings.scheme = prob.scheme;
    settings.scaling = prob.scaling;
    const Matrix* energy =
        prob.target_kind == TargetKind::hamiltonian ? &prob.target : nullptr;
    EnsembleStats stats = run_sse_ensemble(prob.system, pulse, prob.phi0, settings, trials,
                                           prob.master_seed, energy, 0, rc.threads);

    write_provenance(rc.output_dir, rc.echo, prob.master_seed, "experiment=simulate");
    const auto t = time_grid(pulse);
    CsvWriter ens({"t", "mean_fidelity", "sem_fidelity"});
    for (int i = 0; i <= pulse.steps(); ++i)
        ens.row({t[i], stats.mean_fidelity[i], stats.sem_fidelity[i]});
    write_text_atomic(rc.output_dir + "/ensemble.csv", ens.str());

    // Per-trajectory dump: t, re/im amplitudes of psi and phi, fidelity,
    // realized noise value per channel.
    SseSettings dump_settings = settings;
    dump_settings.store_states = true;
    SsePlan plan = build_sse_plan(prob.system, pulse, dump_settings);
    DeterministicReference ref = build_reference(prob.system, pulse);
    const auto phi = deterministic_states(ref, prob.phi0.amplitudes());
    const int d = prob.system.dim();
    const int L = static_cast<int>(prob.system.channels.size());
    for (int k = 0; k < dump_count; ++k) {
        TrajectoryRecord rec =
            propagate_sse_trajectory(plan, phi, prob.phi0, derive_seed(prob.master_seed, k));
        std::vector<std::string> cols{"t"};
        for (int i = 0; i < d; ++i) {
            cols.push_back("psi" + std::to_string(i) + "_re");
            cols.push_back("psi" + std::to_string(i) + "_im");
        }
        for (int i = 0; i < d; ++i) {
            cols.push_back("phi" + std::to_string(i) + "_re");
            cols.push_back("phi" + std::to_string(i) + "_im");
        }
        cols.push_back("fidelity");
        for (int l = 0; l < L; ++l) cols.push_back("x" + std::to_string(l));
        CsvWriter dump(cols);
        for (int i = 0; i <= pulse.steps(); ++i) {
            std::vector<double> row{t[i]};
            for (int a = 0; a < d; ++a) {
                row.push_back(rec.psi[i][a].real());
                row.push_back(rec.psi[i][a].imag());
            }
            for (int a = 0; a < d; ++a) {
                row.push_back(rec.phi[i][a].real());
                row.push_back(rec.phi[i][a].imag());
            }
            row.push_back(rec.fidelity[i]);
            for (int l = 0; l < L; ++l) row.push_back(rec.x[l][i]);
            dump.row(row);
        }
        write_text_atomic(rc.output_dir + "/trajectory_" + std::to_string(k) + ".csv",
                          dump.str());
    }

    json summary;
    summary["trials"] = trials;
    summary["mean_fidelity_T"] = stats.mean_fidelity.back();
    summary["sem_fidelity_T"] = stats.sem_fidelity.back();
    if (energy) {
        summary["mean_energy_T"] = stats.mean_energy;
        summary["sem_energy_T"] = stats.sem_energy;
    }
    write_text_atomic(rc.output_dir + "/summary.json", summary.dump(2) + "\n");
    std::cout << "simulate: mean fidelity at T = " << stats.mean_fidelity.back() << " +- "
              << stats.sem_fidelity.back() << " (" << trials << " trials)\n";
    return 0;
}

//----------------------------------------------------------------------------
// optimize / gate
//----------------------------------------------------------------------------

void write_history(const std::string& dir, const RunHistory& hist, double dt) {
    CsvWriter csv({"iteration", "cost", "j1", "j2", "j3", "mean_energy", "sem_energy",
                   "mean_fidelity", "grad_norm", "step_size", "mu_effective"});
    for (const auto& s : hist.iterations)
        csv.row({static_cast<double>(s.iteration), s.cost, s.j1, s.j2, s.j3, s.mean_energy,
                 s.sem_energy, s.mean_fidelity, s.grad_norm, s.step_size, s.mu_effective});
    write_text_atomic(dir + "/history.csv", csv.str());

    CsvWriter pulses({"iteration", "channel", "step", "t", "z"});
    for (const auto& s : hist.iterations)
        for (int j = 0; j < s.pulse.channels(); ++j)
            for (int i = 0; i < s.pulse.steps(); ++i)
                pulses.row({static_cast<double>(s.iteration), static_cast<double>(j),
                            static_cast<double>(i), i * dt, s.pulse.z[j][i]});
    write_text_atomic(dir + "/pulses.csv", pulses.str());

    std::vector<std::string> cols{"t"};
    for (int j = 0; j < hist.final_pulse.channels(); ++j)
        cols.push_back("z" + std::to_string(j));
    CsvWriter fin(cols);
    for (int i = 0; i < hist.final_pulse.steps(); ++i) {
        std::vector<double> row{i * dt};
        for (int j = 0; j < hist.final_pulse.channels(); ++j)
            row.push_back(hist.final_pulse.z[j][i]);
        fin.row(row);
    }
    write_text_atomic(dir + "/pulse_final.csv", fin.str());
}

int run_optimize(const RunConfig& rc) {
    if (rc.problem.target_kind != TargetKind::hamiltonian)
        throw ConfigError("optimize: config target must be a Hamiltonian (use `gate` for unitaries)");
    RunHistory hist = optimize(rc.problem);
    write_provenance(rc.output_dir, rc.echo, rc.problem.master_seed, "experiment=optimize");
    write_history(rc.output_dir, hist, rc.problem.dt());
    json summary;
    summary["final_error"] = hist.final_error;
    summary["final_error_sem"] = hist.final_error_sem;
    summary["eval_trials"] = rc.problem.eval_trials;
    summary["iterations"] = rc.problem.iterations;
    write_text_atomic(rc.output_dir + "/summary.json", summary.dump(2) + "\n");
    std::cout << "optimize: final J_err = " << hist.final_error << " +- "
              << hist.final_error_sem << " over " << rc.problem.eval_trials
              << " evaluation trials\n";
    return 0;
}

int run_gate(const RunConfig& rc) {
    if (rc.problem.target_kind != TargetKind::unitary)
        throw ConfigError("gate: config target must be a unitary");
    const OptimizationProblem& prob = rc.problem;
    RunHistory hist = optimize(prob);
    write_provenance(rc.output_dir, rc.echo, prob.master_seed, "experiment=gate");
    write_history(rc.output_dir, hist, prob.dt());

    // Evaluation: noisy/noiseless unitary pairs at the final pulse; gate
    // overlap error plus per-initial-state fidelities over 64 Haar states.
    const int d = prob.system.dim();
    const int n_states = 64;
    std::vector<CVec> states;
    for (int s = 0; s < n_states; ++s) {
        Matrix u = haar_random_unitary(d, derive_seed(prob.master_seed, s, 0x57a7eULL));
        CVec phi(d);
        for (int i = 0; i < d; ++i) phi[i] = u(i, 0);
        states.push_back(std::move(phi));
    }

    SseSettings settings;
    settings.scheme = prob.scheme;
    settings.scaling = prob.scaling;
    SsePlan plan = build_sse_plan(prob.system, hist.final_pulse, settings);
    DeterministicReference ref = build_reference(prob.system, hist.final_pulse);

    const long trials = prob.eval_trials;
    std::vector<double> state_sum(n_states, 0.0), state_sum2(n_states, 0.0);
    std::vector<cplx> trace_sum_per_trial(trials);
    std::vector<std::vector<double>> per_trial_f(trials, std::vector<double>(n_states));
    parallel_for(trials, rc.threads, [&](long t) {
        UnitaryPairRecord rec = propagate_unitary_pair(
            plan, ref, derive_seed(prob.master_seed, t, 0xea1fULL));
        const Matrix q = rec.v_final.adjoint() * rec.u_final;
        trace_sum_per_trial[t] = q.trace();
        for (int s = 0; s < n_states; ++s) {
            const CVec qs = q.apply(states[s]);
            per_trial_f[t][s] = std::norm(inner(states[s], qs));
        }
    });
    cplx trace_mean(0.0, 0.0);
    for (long t = 0; t < trials; ++t) {
        trace_mean += trace_sum_per_trial[t] / static_cast<double>(trials);
        for (int s = 0; s < n_states; ++s) {
            state_sum[s] += per_trial_f[t][s];
            state_sum2[s] += per_trial_f[t][s] * per_trial_f[t][s];
        }
    }
    CsvWriter st({"state", "mean_fidelity", "sem_fidelity"});
    double f_mean = 0.0, f_var = 0.0;
    std::vector<double> per_state(n_states);
    for (int s = 0; s < n_states; ++s) {
        const double m = state_sum[s] / trials;
        const double var = std::max(0.0, state_sum2[s] / trials - m * m);
        st.row({static_cast<double>(s), m, std::sqrt(var / trials)});
        per_state[s] = m;
        f_mean += m / n_states;
    }
    for (int s = 0; s < n_states; ++s)
        f_var += (per_state[s] - f_mean) * (per_state[s] - f_mean) / n_states;
    write_text_atomic(rc.output_dir + "/gate_states.csv", st.str());

    json summary;
    summary["overlap_error"] = 1.0 - std::real(trace_mean) / d;
    summary["state_fidelity_mean"] = f_mean;
    summary["state_fidelity_variance"] = f_var;
    summary["eval_trials"] = trials;
    write_text_atomic(rc.output_dir + "/summary.json", summary.dump(2) + "\n");
    std::cout << "gate: overlap error = " << 1.0 - std::real(trace_mean) / d
              << ", state fidelity " << f_mean << " (variance " << f_var << ")\n";
    return 0;
}

//----------------------------------------------------------------------------
// benchmark
//----------------------------------------------------------------------------

int run_benchmark(int problems, std::uint64_t seed, const std::string& scaling_name,
                  double noise_bound, const std::string& out_dir, int threads) {
    ScalingMode scaling;
    if (scaling_name == "fixed") scaling = ScalingMode::fixed;
    else if (scaling_name == "scaled") scaling = ScalingMode::scaled;
    else throw ConfigError("benchmark: --scaling must be 'fixed' or 'scaled'");

    ensure_dir(out_dir);
    json echo;
    echo["experiment"] = "benchmark";
    echo["problems"] = problems;
    echo["seed"] = seed;
    echo["scaling"] = scaling_name;
    echo["noise_bound"] = noise_bound;
    write_provenance(out_dir, echo, seed, "experiment=benchmark");

    CsvWriter csv({"index", "err_vqoc", "sem_vqoc", "err_end", "sem_end", "err_cont",
                   "sem_cont", "rel_end", "rel_cont"});
    int idx = 0;
    BenchmarkSummary summary = benchmark_relative_error(
        problems, seed, noise_bound, scaling, threads, [&](const BenchmarkRow& r) {
            csv.row({static_cast<double>(idx), r.err_vqoc, r.sem_vqoc, r.err_end, r.sem_end,
                     r.err_cont, r.sem_cont, r.rel_end, r.rel_cont});
            std::cerr << "problem " << idx << ": vqoc " << r.err_vqoc << "  end "
                      << r.err_end << "  cont " << r.err_cont << "\n";
            ++idx;
        });
    write_text_atomic(out_dir + "/problems.csv", csv.str());

    json js;
    js["problems"] = problems;
    js["win_rate_end"] = summary.win_rate_end;
    js["win_rate_continuous"] = summary.win_rate_cont;
    js["mean_relative_change_end"] = summary.mean_rel_end;
    js["mean_relative_change_continuous"] = summary.mean_rel_cont;
    write_text_atomic(out_dir + "/summary.json", js.dump(2) + "\n");
    std::cout << "benchmark: win rate (continuous) = " << summary.win_rate_cont
              << ", mean relative change = " << summary.mean_rel_cont << "\n";
    return 0;
}

//----------------------------------------------------------------------------
// oracle-check
//----------------------------------------------------------------------------

struct OracleRow {
    std::string name;
    double value = 0.0;
    double reference = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

int run_oracle_check(std::uint64_t seed, const std::string& out_dir, int threads) {
    std::vector<OracleRow> rows;
    auto band_check = [&](const std::string& name, double value, double reference,
                          double band) {
        rows.push_back({name, value, reference, band, std::abs(value - reference) <= band});
    };
    auto bound_check = [&](const std::string& name, double value, double bound) {
        rows.push_back({name, value, 0.0, bound, value <= bound});
    };

    // 1. White-noise dephasing against the closed-form ensemble solution.
    {
        QubitSystem sys;
        sys.n_qubits = 1;
        sys.channels.push_back({pauli_z(), NoiseSpec::white_noise(0.1), -1});
        ControlPulse pulse = ControlPulse::zero(0, 1000, 1e-3);
        SseSettings st;
        EnsembleStats stats = run_sse_ensemble(sys, pulse, QuantumState::ket("+"), st, 10000,
                                               derive_seed(seed, 1), nullptr, 0, threads);
        for (double t : {0.25, 0.5, 1.0}) {
            const int i = static_cast<int>(std::llround(t / 1e-3));
            const double ref = 0.5 * (1.0 + std::exp(-2.0 * 0.01 * t));
            band_check("dephasing_F(t=" + std::to_string(t) + ")", stats.mean_fidelity[i],
                       ref, 3.0 * stats.sem_fidelity[i]);
        }
    }
    // 2. OU cosine moments, both initial modes.
    {
        const double gamma = 0.1, k = 0.1, T = 1.0;
        for (NoiseInit init : {NoiseInit::calibrated, NoiseInit::stationary}) {
            NoiseSpec spec = NoiseSpec::ou(gamma, k, init);
            for (double alpha : {1.0, 2.0}) {
                const long paths = 100000;
                std::vector<double> vals(paths);
                parallel_for(paths, threads, [&](long p) {
                    NoisePath path = sample_path(spec, 1e-3, 1000,
                                                 derive_seed(seed, p, alpha == 1.0 ? 2 : 3,
                                                             init == NoiseInit::calibrated ? 0 : 1));
                    vals[p] = std::cos(alpha * (path.x[1000] - path.x[0]));
                });
                double m = 0, m2 = 0;
                for (double v : vals) {
                    m += v / paths;
                    m2 += v * v / paths;
                }
                const double sem = std::sqrt(std::max(0.0, m2 - m * m) / paths);
                const double ref = expected_cos(alpha, T, k, gamma, init);
                band_check(std::string("ou_cos_") +
                               (init == NoiseInit::calibrated ? "calibrated" : "stationary") +
                               "_alpha" + std::to_string(static_cast<int>(alpha)),
                           m, ref, 3.0 * sem);
            }
        }
    }
    // 3. Second-order moment system against a short-time SSE ensemble.
    {
        SecondOrderSystem sys{0.1, 0.1, 0.0};
        std::vector<double> grid{0.0, 0.25, 0.5};
        auto f = second_order_mean_fidelity(sys, grid);
        QubitSystem q;
        q.n_qubits = 1;
        q.channels.push_back({pauli_z(), NoiseSpec::ou(0.1, 0.1), -1});
        ControlPulse pulse = ControlPulse::zero(0, 500, 1e-3);
        SseSettings st;
        EnsembleStats stats = run_sse_ensemble(q, pulse, QuantumState::ket("+"), st, 10000,
                                               derive_seed(seed, 4), nullptr, 0, threads);
        band_check("moment6_F(0.25)", f[1], stats.mean_fidelity[250],
                   3.0 * stats.sem_fidelity[250]);
        band_check("moment6_F(0.5)", f[2], stats.mean_fidelity[500],
                   3.0 * stats.sem_fidelity[500]);
    }
    // 4. Non-commuting 10-dimensional white-noise mean against simulation.
    {
        NonCommutingSystem nc = NonCommutingSystem::make(1.0, 0.1);
        const CVec v0 = NonCommutingSystem::v0_from_bloch(0.0, 0.0, 1.0);
        QubitSystem q;
        q.n_qubits = 1;
        q.drift = pauli_x();
        q.channels.push_back({pauli_y(), NoiseSpec::white_noise(0.1), -1});
        ControlPulse pulse = ControlPulse::zero(0, 2000, 1e-3);
        SseSettings st;
        EnsembleStats stats = run_sse_ensemble(q, pulse, QuantumState::ket("0"), st, 10000,
                                               derive_seed(seed, 5), nullptr, 0, threads);
        for (double t : {1.0, 2.0}) {
            const int i = static_cast<int>(std::llround(t / 1e-3));
            const CVec vt = noncommuting_wn_mean(nc, t, v0);
            band_check("noncommuting_F(t=" + std::to_string(t) + ")", stats.mean_fidelity[i],
                       std::real(vt[0]), 3.0 * stats.sem_fidelity[i]);
        }
    }
    // 5. Magnus error scaling: halving gamma shrinks the deviation >= 8x.
    {
        auto deviation = [&](double gamma) {
            NonCommutingSystem nc = NonCommutingSystem::make(1.0, gamma);
            Matrix exact = expm(nc.a_c * cplx(-1.0, 0.0));
            Matrix gen = nc.a_c;
            gen += (nc.b * nc.b) * cplx(0.5 * gamma * gamma, 0.0);
            exact = exact * expm(gen);
            return (noncommuting_magnus_wn(nc, 1.0) - exact).max_abs();
        };
        const double d1 = deviation(0.05), d2 = deviation(0.025);
        rows.push_back({"magnus_gamma_halving_ratio", d1 / d2, 8.0, 0.0, d1 / d2 >= 8.0});
    }
    // 6. OU Magnus correction beats the k = 0 form against an OU ensemble.
    {
        QubitSystem q;
        q.n_qubits = 1;
        q.drift = pauli_x();
        q.channels.push_back({pauli_y(), NoiseSpec::ou(0.05, 0.1), -1});
        ControlPulse pulse = ControlPulse::zero(0, 1000, 1e-3);
        SseSettings st;
        EnsembleStats stats = run_sse_ensemble(q, pulse, QuantumState::ket("0"), st, 10000,
                                               derive_seed(seed, 6), nullptr, 0, threads);
        NonCommutingSystem nc = NonCommutingSystem::make(1.0, 0.05);
        const CVec v0 = NonCommutingSystem::v0_from_bloch(0.0, 0.0, 1.0);
        Matrix frame = expm(nc.a_c * cplx(1.0, 0.0));
        const double f_ou =
            std::real(frame.apply(ou_magnus_second_order(nc, 0.1, 1.0).apply(v0))[0]);
        const double f_k0 =
            std::real(frame.apply(ou_magnus_second_order(nc, 0.0, 1.0).apply(v0))[0]);
        const double mc = stats.mean_fidelity[1000];
        rows.push_back({"ou_magnus_improves_on_k0", std::abs(mc - f_ou),
                        std::abs(mc - f_k0), 0.0, std::abs(mc - f_ou) < std::abs(mc - f_k0)});
    }
    // 7. Factoring of two-qubit fidelity on a shared OU path.
    {
        NoiseSpec spec = NoiseSpec::ou(0.1, 0.1);
        NoisePath path = sample_path(spec, 1e-3, 1000, derive_seed(seed, 7));
        FactoringResult fr = factoring_check(
            {pauli_x(), pauli_y()}, {pauli_z(), pauli_z()}, spec, path,
            {QuantumState::ket("0").amplitudes(), QuantumState::ket("+").amplitudes()});
        bound_check("factoring_max_difference", fr.max_difference, 1e-4);
    }
    // 8. Transfer-representation equivalence on one OU realization.
    {
        QubitSystem sys;
        sys.n_qubits = 1;
        sys.controls = {pauli_x(), pauli_y(), pauli_z()};
        sys.channels.push_back({pauli_x(), NoiseSpec::ou(0.07, 0.1), 0});
        sys.channels.push_back({pauli_y(), NoiseSpec::ou(0.01, 0.1), 1});
        sys.channels.push_back({pauli_z(), NoiseSpec::ou(0.01, 0.1), 2});
        ControlPulse pulse = ControlPulse::random_uniform(3, 1000, 1e-3, 0.5,
                                                          derive_seed(seed, 8));
        bound_check("transfer_equivalence_deviation",
                    consistency_check(sys, pulse, QuantumState::ket("0"),
                                      QuantumState::ket("0"), derive_seed(seed, 9)),
                    1e-4);
    }

    ensure_dir(out_dir);
    CsvWriter csv({"check", "value", "reference", "tolerance", "pass"});
    bool all_pass = true;
    for (const auto& r : rows) {
        csv.raw_row({r.name, format_double(r.value), format_double(r.reference),
                     format_double(r.tolerance), r.pass ? "1" : "0"});
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " value=" << r.value
                  << " reference=" << r.reference << "\n";
        all_pass = all_pass && r.pass;
    }
    write_text_atomic(out_dir + "/oracle_results.csv", csv.str());
    json summary;
    summary["checks"] = rows.size();
    summary["all_pass"] = all_pass;
    write_text_atomic(out_dir + "/summary.json", summary.dump(2) + "\n");
    if (!all_pass) throw NumericalError("oracle-check: at least one comparison failed");
    return 0;
}

//----------------------------------------------------------------------------
// convergence
//----------------------------------------------------------------------------

int run_convergence(std::uint64_t seed, const std::string& out_dir, long paths, int threads) {
    ensure_dir(out_dir);
    const std::vector<double> dts{4e-2, 2e-2, 1e-2, 5e-3};
    CsvWriter csv({"scheme", "dt", "weak_error", "sem"});
    json summary;
    for (Scheme scheme : {Scheme::euler, Scheme::platen}) {
        WeakOrderStudy study = weak_order_study(scheme, dts, paths, seed, threads);
        const char* name = scheme == Scheme::euler ? "euler" : "platen";
        for (const auto& pt : study.points)
            csv.raw_row({name, format_double(pt.dt), format_double(pt.error),
                         format_double(pt.sem)});
        summary[std::string(name) + "_slope"] = study.slope;
        std::cout << name << " weak-order slope: " << study.slope << "\n";
    }
    write_text_atomic(out_dir + "/orders.csv", csv.str());
    write_text_atomic(out_dir + "/summary.json", summary.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic Schroedinger equation simulator and noise-aware pulse optimizer"};
    app.require_subcommand(1);

    CommonArgs args;
    int dump_count = 1;

    auto* sim = app.add_subcommand("simulate", "Run a noisy trajectory ensemble");
    sim->add_option("--config", args.config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    sim->add_option("--out", args.out_dir, "output directory");
    sim->add_option("--seed", args.seed, "master seed override");
    sim->add_option("--trials", args.trials, "trajectory count");
    sim->add_option("--threads", args.threads, "worker cap (or FVQOC_THREADS)");
    sim->add_option("--dump-trajectories", dump_count, "trajectories to dump as CSV");

    auto* opt = app.add_subcommand("optimize", "Optimize pulses for a Hamiltonian target");
    opt->add_option("--config", args.config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    opt->add_option("--out", args.out_dir, "output directory");
    opt->add_option("--seed", args.seed, "master seed override");
    opt->add_option("--threads", args.threads, "worker cap (or FVQOC_THREADS)");

    auto* gate = app.add_subcommand("gate", "Optimize pulses for a target unitary");
    gate->add_option("--config", args.config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    gate->add_option("--out", args.out_dir, "output directory");
    gate->add_option("--seed", args.seed, "master seed override");
    gate->add_option("--threads", args.threads, "worker cap (or FVQOC_THREADS)");

    int problems = 50;
    long bench_seed = 1;
    std::string scaling_name = "fixed";
    double noise_bound = 0.1;
    std::string bench_out = "results/benchmark";
    int bench_threads = 0;
    auto* bench = app.add_subcommand("benchmark", "Randomized problems: noise-aware vs plain");
    bench->add_option("--problems", problems, "number of random problems");
    bench->add_option("--seed", bench_seed, "master seed");
    bench->add_option("--scaling", scaling_name, "fixed|scaled");
    bench->add_option("--noise-bound", noise_bound, "gamma upper bound");
    bench->add_option("--out", bench_out, "output directory");
    bench->add_option("--threads", bench_threads, "worker cap (or FVQOC_THREADS)");

    long oc_seed = 7;
    std::string oc_out = "results/oracle-check";
    int oc_threads = 0;
    auto* oc = app.add_subcommand("oracle-check", "Analytic-oracle comparison suite");
    oc->add_option("--seed", oc_seed, "master seed");
    oc->add_option("--out", oc_out, "output directory");
    oc->add_option("--threads", oc_threads, "worker cap (or FVQOC_THREADS)");

    long cv_seed = 11;
    long cv_paths = 100000;
    std::string cv_out = "results/convergence";
    int cv_threads = 0;
    auto* cv = app.add_subcommand("convergence", "Weak-order study of the SDE steppers");
    cv->add_option("--seed", cv_seed, "master seed");
    cv->add_option("--paths", cv_paths, "paths per step size");
    cv->add_option("--out", cv_out, "output directory");
    cv->add_option("--threads", cv_threads, "worker cap (or FVQOC_THREADS)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return run_simulate(load_run_config(args), dump_count);
        if (opt->parsed()) return run_optimize(load_run_config(args));
        if (gate->parsed()) return run_gate(load_run_config(args));
        if (bench->parsed())
            return run_benchmark(problems, static_cast<std::uint64_t>(bench_seed),
                                 scaling_name, noise_bound, bench_out, bench_threads);
        if (oc->parsed())
            return run_oracle_check(static_cast<std::uint64_t>(oc_seed), oc_out, oc_threads);
        if (cv->parsed())
            return run_convergence(static_cast<std::uint64_t>(cv_seed), cv_out, cv_paths,
                                   cv_threads);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

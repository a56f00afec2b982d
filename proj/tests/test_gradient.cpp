#include <catch_amalgamated.hpp>

#include "fvqoc/gradient.hpp"
#include "fvqoc/parallel.hpp"
#include "test_support.hpp"

using namespace fvqoc;

namespace {

QubitSystem plain_controls() {
    QubitSystem sys;
    sys.n_qubits = 1;
    sys.controls = {pauli_x(), pauli_y(), pauli_z()};
    return sys;
}

QubitSystem noisy_system(ScalingMode scaling) {
    QubitSystem sys = plain_controls();
    sys.channels.push_back({pauli_x(), NoiseSpec::ou(0.07, 0.1), 0});
    sys.channels.push_back({pauli_y(), NoiseSpec::ou(0.01, 0.1), 1});
    sys.channels.push_back({pauli_z(), NoiseSpec::ou(0.01, 0.1), 2});
    (void)scaling;
    return sys;
}

}  // namespace

TEST_CASE("vqoc gradient structural cases", "[gradient]") {
    QubitSystem sys = plain_controls();
    ControlPulse pulse = ControlPulse::random_uniform(3, 60, 1.0 / 60, 0.8, 2);
    QuantumState phi0 = QuantumState::ket("0");
    const double lambda = 0.1;

    // identity target: the propagated-target commutator vanishes and only
    // the amplitude regularizer survives
    PulseGrid g = vqoc_gradient(sys, Matrix::identity(2), pulse, phi0, lambda);
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 60; ++i)
            CHECK(std::abs(g[j][i] - lambda * pulse.z[j][i]) < 1e-12);

    // single channel generated by the target itself commutes all the way
    QubitSystem xonly;
    xonly.n_qubits = 1;
    xonly.controls = {pauli_x()};
    ControlPulse xp = ControlPulse::random_uniform(1, 60, 1.0 / 60, 0.8, 3);
    PulseGrid gx = vqoc_gradient(xonly, pauli_x(), xp, phi0, lambda);
    for (int i = 0; i < 60; ++i) CHECK(std::abs(gx[0][i] - lambda * xp.z[0][i]) < 1e-12);
}

TEST_CASE("vqoc gradient matches finite differences", "[gradient]") {
    QubitSystem sys = plain_controls();
    Matrix targ = random_hermitian(2, 5);
    ControlPulse pulse = ControlPulse::random_uniform(3, 50, 0.02, 0.5, 11);
    QuantumState phi0 = QuantumState::ket("0");
    const double lambda = 0.1;

    auto cost = [&](const ControlPulse& p) {
        return j1_state_cost(sys, targ, p, phi0) + j2_cost(p, lambda);
    };
    PulseGrid g = vqoc_gradient(sys, targ, pulse, phi0, lambda);
    for (int j = 0; j < 3; ++j)
        for (int i = 3; i < 50; i += 11) {
            const double fd = testutil::fd_density(cost, pulse, j, i, 1e-5);
            CHECK(std::abs(fd - g[j][i]) < 1e-4 * std::max(1e-6, std::abs(fd)));
        }
}

TEST_CASE("zeta series", "[gradient]") {
    QubitSystem sys = plain_controls();
    QubitSystem quiet = sys;
    quiet.channels.push_back({pauli_z(), NoiseSpec::white_noise(0.0), -1});
    ControlPulse pulse = ControlPulse::random_uniform(3, 1000, 1e-3, 0.5, 7);
    TransferSystem ts = build_transfer_system(quiet, pauli_basis(1));
    const CVec zero = QuantumState::ket("0").amplitudes();
    EtaState eta0 = eta_from_states(ts.basis, zero, zero);
    EtaSettings settings;
    EtaTrajectory traj = propagate_eta(ts, quiet, pulse, eta0, settings, 5);

    // nu = 0: zeta is constant in t and equals the terminal row
    auto z0 = zeta_series(traj, 0.0, EtaMode::state);
    for (int i = 0; i <= 1000; i += 97)
        for (int c = 0; c < 4; ++c) CHECK(std::abs(z0[i][c] - z0[1000][c]) < 1e-14);

    // constant integrand (zero pulse, no noise): exact linear ramp
    // zeta_t = zeta_T + nu * c * (T - t)
    ControlPulse still = ControlPulse::zero(3, 1000, 1e-3);
    EtaTrajectory flat = propagate_eta(ts, quiet, still, eta0, settings, 5);
    auto zr = zeta_series(flat, 1.0, EtaMode::state);
    for (int i = 0; i <= 1000; i += 125) {
        const double remaining = (1000 - i) * 1e-3;
        for (int c = 0; c < 4; ++c) {
            const cplx expect = zr[1000][c] * (1.0 + remaining);  // integrand equals zeta_T here
            CHECK(std::abs(zr[i][c] - expect) < 1e-12);
        }
    }
    auto z1 = zeta_series(traj, 1.0, EtaMode::state);

    // trapezoid against Simpson on the same samples: quadrature-rule
    // insensitivity of the running integral at dt = 1e-3
    CVec simpson(4, cplx(0.0, 0.0));
    auto integrand = [&](int i) {
        CVec r(4);
        for (int c = 0; c < 4; ++c)
            r[c] = std::conj(traj.eta[i][0]) * traj.phi_op[i](0, c);
        return r;
    };
    // composite Simpson over the full interval [0, T]
    for (int i = 0; i <= 1000; ++i) {
        const double w = (i == 0 || i == 1000) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        CVec r = integrand(i);
        for (int c = 0; c < 4; ++c) simpson[c] += w * r[c];
    }
    for (int c = 0; c < 4; ++c) simpson[c] *= 1e-3 / 3.0;
    CVec trapz(4, cplx(0.0, 0.0));
    for (int c = 0; c < 4; ++c) trapz[c] = z1[0][c] - z1[1000][c];  // nu * integral, nu = 1
    for (int c = 0; c < 4; ++c) CHECK(std::abs(trapz[c] - simpson[c]) < 1e-6);
}

TEST_CASE("stochastic gradient vanishes without noise or weight", "[gradient]") {
    QubitSystem sys = noisy_system(ScalingMode::fixed);
    for (auto& c : sys.channels) c.spec.gamma = 0.0;
    ControlPulse pulse = ControlPulse::random_uniform(3, 100, 1e-2, 0.5, 13);
    TransferSystem ts = build_transfer_system(sys, pauli_basis(1));
    const CVec zero = QuantumState::ket("0").amplitudes();
    EtaState eta0 = eta_from_states(ts.basis, zero, zero);
    CostWeights w{0.1, 250.0, 1.0};

    GradientSample gs = fvqoc_gradient_fixed(ts, sys, pulse, eta0, w, 3);
    for (const auto& ch : gs.g)
        for (double v : ch) CHECK(std::abs(v) < 1e-9);

    // mu = 0 zeroes the sample regardless of the trajectory
    QubitSystem noisy = noisy_system(ScalingMode::fixed);
    TransferSystem tsn = build_transfer_system(noisy, pauli_basis(1));
    CostWeights w0{0.1, 0.0, 1.0};
    GradientSample gs0 = fvqoc_gradient_fixed(tsn, noisy, pulse, eta0, w0, 3);
    for (const auto& ch : gs0.g)
        for (double v : ch) CHECK(v == 0.0);
}

namespace {

struct CrnHarness {
    QubitSystem sys;
    TransferSystem ts;
    EtaState eta0;
    CostWeights weights{0.1, 250.0, 1.0};
    ScalingMode mode = ScalingMode::fixed;
    long trials = 2000;
    std::uint64_t seed = 77;

    double mc_j3(const ControlPulse& p) const {
        std::vector<double> vals(trials);
        parallel_for(trials, 0, [&](long t) {
            const auto paths = sample_channel_paths(sys, p.dt, p.steps(), derive_seed(seed, t));
            vals[t] = fvqoc_gradient_trial(ts, sys, p, eta0, weights, mode,
                                           derive_seed(seed, t), &paths)
                          .j3;
        });
        double s = 0.0;
        for (double v : vals) s += v;
        return s / trials;
    }

    PulseGrid mean_gradient(const ControlPulse& p, PulseGrid* sem_out) const {
        std::vector<PulseGrid> gs(trials);
        parallel_for(trials, 0, [&](long t) {
            const auto paths = sample_channel_paths(sys, p.dt, p.steps(), derive_seed(seed, t));
            gs[t] = fvqoc_gradient_trial(ts, sys, p, eta0, weights, mode,
                                         derive_seed(seed, t), &paths)
                        .g;
        });
        PulseGrid mean = zero_grid(p.channels(), p.steps());
        PulseGrid m2 = zero_grid(p.channels(), p.steps());
        for (const auto& g1 : gs)
            for (int j = 0; j < p.channels(); ++j)
                for (int i = 0; i < p.steps(); ++i) {
                    mean[j][i] += g1[j][i] / trials;
                    m2[j][i] += g1[j][i] * g1[j][i] / trials;
                }
        if (sem_out) {
            *sem_out = zero_grid(p.channels(), p.steps());
            for (int j = 0; j < p.channels(); ++j)
                for (int i = 0; i < p.steps(); ++i)
                    (*sem_out)[j][i] = std::sqrt(
                        std::max(0.0, m2[j][i] - mean[j][i] * mean[j][i]) / trials);
        }
        return mean;
    }
};

}  // namespace

TEST_CASE("fixed-noise gradient matches CRN finite differences", "[gradient][slow]") {
    CrnHarness h;
    h.sys = noisy_system(ScalingMode::fixed);
    h.ts = build_transfer_system(h.sys, pauli_basis(1));
    const CVec zero = QuantumState::ket("0").amplitudes();
    h.eta0 = eta_from_states(h.ts.basis, zero, zero);

    ControlPulse pulse = ControlPulse::random_uniform(3, 100, 1e-2, 0.5, 11);
    PulseGrid sem;
    PulseGrid mean = h.mean_gradient(pulse, &sem);
    double gmax = 0.0;
    for (const auto& ch : mean)
        for (double v : ch) gmax = std::max(gmax, std::abs(v));

    int checked = 0;
    for (int j = 0; j < 3; ++j)
        for (int i = 10; i < 100; i += 40) {
            // components above the Monte Carlo noise floor only
            if (std::abs(mean[j][i]) < 0.2 * gmax || std::abs(mean[j][i]) < 5.0 * sem[j][i])
                continue;
            auto cost = [&](const ControlPulse& p) { return h.mc_j3(p); };
            const double fd = testutil::fd_density(cost, pulse, j, i, 1e-4);
            CHECK(std::abs(fd - mean[j][i]) < 0.05 * std::abs(fd));
            ++checked;
        }
    CHECK(checked >= 2);
}

TEST_CASE("scaled-noise gradient matches CRN finite differences", "[gradient][slow]") {
    CrnHarness h;
    h.sys = noisy_system(ScalingMode::scaled);
    h.ts = build_transfer_system(h.sys, pauli_basis(1));
    const CVec zero = QuantumState::ket("0").amplitudes();
    h.eta0 = eta_from_states(h.ts.basis, zero, zero);
    h.mode = ScalingMode::scaled;
    h.trials = 4000;

    ControlPulse pulse = ControlPulse::random_uniform(3, 100, 1e-2, 0.5, 11);
    PulseGrid sem;
    PulseGrid mean = h.mean_gradient(pulse, &sem);
    double gmax = 0.0;
    for (const auto& ch : mean)
        for (double v : ch) gmax = std::max(gmax, std::abs(v));

    int checked = 0;
    for (int j = 0; j < 3; ++j)
        for (int i = 10; i < 100; i += 40) {
            if (std::abs(mean[j][i]) < 0.2 * gmax || std::abs(mean[j][i]) < 5.0 * sem[j][i])
                continue;
            auto cost = [&](const ControlPulse& p) { return h.mc_j3(p); };
            const double fd = testutil::fd_density(cost, pulse, j, i, 1e-4);
            CHECK(std::abs(fd - mean[j][i]) < 0.10 * std::abs(fd));
            ++checked;
        }
    CHECK(checked >= 2);
}

TEST_CASE("scaled gradient structure at unit amplitude", "[gradient]") {
    // with z = 1 the |z|^{+-1/2} weights are exactly 1, so the scaled sample
    // deviates from the fixed one by the dW-weighted diffusion term alone
    QubitSystem sys = noisy_system(ScalingMode::scaled);
    ControlPulse pulse = ControlPulse::constant({1.0, 1.0, 1.0}, 100, 1e-2);
    TransferSystem ts = build_transfer_system(sys, pauli_basis(1));
    const CVec zero = QuantumState::ket("0").amplitudes();
    EtaState eta0 = eta_from_states(ts.basis, zero, zero);
    CostWeights w{0.1, 250.0, 1.0};
    const auto paths = sample_channel_paths(sys, 1e-2, 100, 19);

    GradientSample scaled = fvqoc_gradient_scaled(ts, sys, pulse, eta0, w, 19, &paths);

    // reassemble by hand from the trajectory pieces
    EtaSettings es;
    es.scaling = ScalingMode::scaled;
    EtaTrajectory traj = propagate_eta(ts, sys, pulse, eta0, es, 19, &paths);
    auto zeta = zeta_series(traj, w.nu, EtaMode::state);
    for (int j = 0; j < 3; ++j)
        for (int i = 5; i < 100; i += 31) {
            CVec xi(4, cplx(0.0, 0.0));
            for (int c = 0; c < 4; ++c)
                for (int q = 0; q < 4; ++q) xi[c] += zeta[i][q] * traj.psi_op[i](q, c);
            CVec av(4, cplx(0.0, 0.0));
            ts.a[j].apply_add(traj.eta[i], av);
            cplx dot(0.0, 0.0);
            for (int c = 0; c < 4; ++c) dot += xi[c] * av[c];
            double expect = 2.0 * std::real(dot);
            CVec bv(4, cplx(0.0, 0.0));
            ts.b[j].apply_add(traj.eta[i], bv);
            cplx dotb(0.0, 0.0);
            for (int c = 0; c < 4; ++c) dotb += xi[c] * bv[c];
            const double gamma = sys.channels[j].spec.gamma;
            expect += 2.0 * 0.5 * gamma * traj.dw[j][i] / 1e-2 * std::real(dotb);
            expect *= -w.mu;
            CHECK(std::abs(scaled.g[j][i] - expect) < 1e-10 * std::max(1.0, std::abs(expect)));
        }

    // every channel must carry a coupling in scaled mode
    QubitSystem uncoupled = sys;
    uncoupled.channels[0].coupling = -1;
    TransferSystem ts2 = build_transfer_system(uncoupled, pauli_basis(1));
    CHECK_THROWS_AS(fvqoc_gradient_scaled(ts2, uncoupled, pulse, eta0, w, 19, &paths),
                    ConfigError);
}

TEST_CASE("gate overlap gradient", "[gradient]") {
    QubitSystem sys = plain_controls();
    ControlPulse pulse = ControlPulse::random_uniform(3, 50, 0.02, 0.5, 23);

    // finite-difference agreement for a random target
    Matrix u_targ = haar_random_unitary(2, 31);
    auto cost = [&](const ControlPulse& p) { return j1_gate_cost(sys, u_targ, p); };
    PulseGrid g = gate_overlap_gradient(sys, u_targ, pulse);
    for (int j = 0; j < 3; ++j)
        for (int i = 5; i < 50; i += 17) {
            const double fd = testutil::fd_density(cost, pulse, j, i, 1e-5);
            CHECK(std::abs(fd - g[j][i]) < 1e-4 * std::max(1e-6, std::abs(fd)));
        }

    // identity target with zero pulse: V_T = I maximizes the overlap
    ControlPulse zero = ControlPulse::zero(3, 50, 0.02);
    PulseGrid g0 = gate_overlap_gradient(sys, Matrix::identity(2), zero);
    for (const auto& ch : g0)
        for (double v : ch) CHECK(std::abs(v) < 1e-12);

    // a phase-matched target with a commuting generator sits at a stationary
    // point of the overlap magnitude
    QubitSystem zonly;
    zonly.n_qubits = 1;
    zonly.controls = {pauli_z()};
    ControlPulse zp = ControlPulse::constant({0.4}, 50, 0.02);
    DeterministicReference ref = build_reference(zonly, zp);
    PulseGrid gz = gate_overlap_gradient(zonly, ref.prefix.back(), zp);
    for (double v : gz[0]) CHECK(std::abs(v) < 1e-10);
}

namespace {

// Deterministic reference for the white-noise gate cost: the mean noisy
// propagator obeys dE[U]/dt = (iH - 1/2 sum g^2 S^2) E[U], so
// Re Tr[V_t^dag E[U_t]]/2 evaluates the expected cost without sampling.
double gate_cost_reference(const QubitSystem& sys, const ControlPulse& pulse, double nu) {
    Matrix mean_u = Matrix::identity(2);
    DeterministicReference ref = build_reference(sys, pulse);
    double integral = 0.0, prev = 1.0;
    for (int i = 0; i < pulse.steps(); ++i) {
        Matrix drift = assemble_hamiltonian(sys, pulse, i);
        drift *= cplx(0.0, 1.0);
        for (const auto& c : sys.channels) {
            Matrix d = c.op * c.op;
            d *= cplx(-0.5 * c.spec.gamma * c.spec.gamma, 0.0);
            drift += d;
        }
        drift *= cplx(pulse.dt, 0.0);
        mean_u = expm(drift) * mean_u;
        const double cur = 0.5 * std::real((ref.prefix[i + 1].adjoint() * mean_u).trace());
        integral += 0.5 * pulse.dt * (prev + cur);
        prev = cur;
    }
    return prev + nu * integral;
}

}  // namespace

TEST_CASE("gate fidelity gradient invariance and signal", "[gradient][slow]") {
    // white noise with S^dag S = I: the mean gate gradient is statistically
    // zero; a projector channel produces a significant signal once the
    // O(gamma^4) pulse dependence clears the sampling noise.
    ControlPulse pulse = ControlPulse::random_uniform(3, 100, 1e-2, 0.5, 41);
    CostWeights w{0.1, 60.0, 1.0};

    auto mean_gate_gradient = [&](const QubitSystem& sys, long trials, PulseGrid* sem_out) {
        TransferSystem ts = build_transfer_system(sys, pauli_basis(1));
        std::vector<PulseGrid> gs(trials);
        parallel_for(trials, 0, [&](long t) {
            gs[t] = gate_fidelity_gradient(ts, sys, pulse, w, derive_seed(3030, t)).g;
        });
        PulseGrid mean = zero_grid(3, 100), m2 = zero_grid(3, 100);
        for (const auto& g1 : gs)
            for (int j = 0; j < 3; ++j)
                for (int i = 0; i < 100; ++i) {
                    mean[j][i] += g1[j][i] / trials;
                    m2[j][i] += g1[j][i] * g1[j][i] / trials;
                }
        *sem_out = zero_grid(3, 100);
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 100; ++i)
                (*sem_out)[j][i] =
                    std::sqrt(std::max(0.0, m2[j][i] - mean[j][i] * mean[j][i]) / trials);
        return mean;
    };

    QubitSystem unital = plain_controls();
    unital.channels.push_back({pauli_z(), NoiseSpec::white_noise(0.1), -1});
    PulseGrid sem;
    PulseGrid mean = mean_gate_gradient(unital, 2000, &sem);
    int exceed = 0, total = 0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 100; i += 5) {
            ++total;
            if (std::abs(mean[j][i]) > 3.0 * sem[j][i]) ++exceed;
        }
    // a few 3-sigma outliers among 60 components are expected by chance
    CHECK(exceed <= total / 10);

    QubitSystem projector = plain_controls();
    Matrix p0(2, 2);
    p0(0, 0) = 1.0;
    projector.channels.push_back({p0, NoiseSpec::white_noise(0.5), -1});
    PulseGrid mean2 = mean_gate_gradient(projector, 20000, &sem);
    int strong = 0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 100; ++i)
            if (std::abs(mean2[j][i]) > 3.0 * sem[j][i]) ++strong;
    CHECK(strong > 10);

    // the strongest component agrees with the deterministic mean-propagator
    // reference
    int jb = 0, ib = 0;
    double best = 0.0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 100; ++i)
            if (std::abs(mean2[j][i]) > best) {
                best = std::abs(mean2[j][i]);
                jb = j;
                ib = i;
            }
    ControlPulse plus = pulse, minus = pulse;
    plus.z[jb][ib] += 1e-4;
    minus.z[jb][ib] -= 1e-4;
    const double det_fd = -w.mu *
                          (gate_cost_reference(projector, plus, w.nu) -
                           gate_cost_reference(projector, minus, w.nu)) /
                          2e-4 / pulse.dt;
    CHECK(std::abs(mean2[jb][ib] - det_fd) < 4.0 * sem[jb][ib]);
}

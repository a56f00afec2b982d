#include <catch_amalgamated.hpp>

#include "fvqoc/oracles.hpp"
#include "fvqoc/sse.hpp"
#include "test_support.hpp"

using namespace fvqoc;

TEST_CASE("second-order moment system basics", "[oracles]") {
    SecondOrderSystem sys{0.1, 0.1, 0.0};
    std::vector<double> grid{0.0, 0.1, 0.2};
    auto f = second_order_mean_fidelity(sys, grid);
    REQUIRE(f.size() == 3);
    CHECK(f[0] == 1.0);
    for (double v : f) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // gamma = 0: fidelity stays one
    SecondOrderSystem quiet{0.0, 0.2, 0.3};
    auto fq = second_order_mean_fidelity(quiet, grid);
    for (double v : fq) CHECK(std::abs(v - 1.0) < 1e-12);

    CHECK_THROWS_AS(second_order_mean_fidelity(sys, {0.5, 1.0}), ConfigError);
}

TEST_CASE("second-order system reduces to the white-noise closed form", "[oracles]") {
    // k = 0 with s0 = 0 collapses the first two components to ordinary
    // dephasing: F(t) = (1 + e^{-2 g^2 t})/2.
    SecondOrderSystem sys{0.1, 0.0, 0.0};
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(0.1 * i);
    auto f = second_order_mean_fidelity(sys, grid);
    for (int i = 0; i <= 10; ++i) {
        const double ref = 0.5 * (1.0 + std::exp(-2.0 * 0.01 * grid[i]));
        CHECK(std::abs(f[i] - ref) < 1e-12);
    }
}

TEST_CASE("second-order system against the ensemble", "[oracles][slow]") {
    SecondOrderSystem sys{0.1, 0.1, 0.0};  // S = sigma_z, phi0 = |+> has s0 = 0
    std::vector<double> grid{0.0, 0.25, 0.5};
    auto f = second_order_mean_fidelity(sys, grid);

    QubitSystem q;
    q.n_qubits = 1;
    q.channels.push_back({pauli_z(), NoiseSpec::ou(0.1, 0.1), -1});
    ControlPulse pulse = ControlPulse::zero(0, 500, 1e-3);
    SseSettings st;
    EnsembleStats stats = run_sse_ensemble(q, pulse, QuantumState::ket("+"), st, 10000, 2718);
    CHECK(std::abs(f[1] - stats.mean_fidelity[250]) < 3.0 * stats.sem_fidelity[250]);
    CHECK(std::abs(f[2] - stats.mean_fidelity[500]) < 3.0 * stats.sem_fidelity[500]);
}

TEST_CASE("non-commuting system basics", "[oracles]") {
    NonCommutingSystem sys = NonCommutingSystem::make(1.0, 0.1);
    const CVec v0 = NonCommutingSystem::v0_from_bloch(0.0, 0.0, 1.0);

    // t = 0 returns the initial vector
    CVec vt = noncommuting_wn_mean(sys, 0.0, v0);
    for (int i = 0; i < 10; ++i) CHECK(std::abs(vt[i] - v0[i]) < 1e-12);

    // gamma = 0: exp(A_c t) conserves the quadratic forms of its rotation
    // blocks: (V2 - V3, V9) and the pairs (V5, V6), (V7, V8); V2 + V3 and the
    // decoupled components V0, V1, V4 are constants
    NonCommutingSystem rot = NonCommutingSystem::make(1.0, 0.0);
    const CVec w = noncommuting_wn_mean(rot, 0.8, v0);
    auto q23 = [](const CVec& v) { return std::norm(v[2] - v[3]) + std::norm(v[9]); };
    CHECK(std::abs(q23(w) - q23(v0)) < 1e-10);
    CHECK(std::abs((w[2] + w[3]) - (v0[2] + v0[3])) < 1e-12);
    CHECK(std::abs(std::norm(w[5]) + std::norm(w[6]) - std::norm(v0[5]) - std::norm(v0[6])) <
          1e-10);
    CHECK(std::abs(std::norm(w[7]) + std::norm(w[8]) - std::norm(v0[7]) - std::norm(v0[8])) <
          1e-10);
    CHECK(std::abs(w[0] - v0[0]) < 1e-12);  // fidelity untouched without noise
    CHECK(std::abs(w[1] - v0[1]) < 1e-12);
    CHECK(std::abs(w[4] - v0[4]) < 1e-12);
}

TEST_CASE("non-commuting mean against the ensemble", "[oracles][slow]") {
    NonCommutingSystem sys = NonCommutingSystem::make(1.0, 0.1);
    const CVec v0 = NonCommutingSystem::v0_from_bloch(0.0, 0.0, 1.0);

    QubitSystem q;
    q.n_qubits = 1;
    q.drift = pauli_x();
    q.channels.push_back({pauli_y(), NoiseSpec::white_noise(0.1), -1});
    ControlPulse pulse = ControlPulse::zero(0, 2000, 1e-3);
    SseSettings st;
    EnsembleStats stats = run_sse_ensemble(q, pulse, QuantumState::ket("0"), st, 10000, 31415);
    for (double t : {0.5, 1.0, 2.0}) {
        const int i = static_cast<int>(t * 1000);
        const CVec vt = noncommuting_wn_mean(sys, t, v0);
        CHECK(std::abs(stats.mean_fidelity[i] - std::real(vt[0])) <
              3.0 * stats.sem_fidelity[i]);
    }
}

TEST_CASE("magnus approximation structure", "[oracles]") {
    NonCommutingSystem sys = NonCommutingSystem::make(1.0, 0.0);
    // gamma = 0: the exponent vanishes identically
    Matrix m = noncommuting_magnus_wn(sys, 1.0);
    CHECK((m - Matrix::identity(10)).max_abs() < 1e-12);

    // D(0) = B and the closed form matches the conjugated generator
    NonCommutingSystem nc = NonCommutingSystem::make(1.0, 0.1);
    CHECK((detail::magnus_d(nc, 0.0) - nc.b).max_abs() < 1e-14);
    for (double t : {0.4, 1.1}) {
        Matrix direct = expm(nc.a_c * cplx(-t, 0.0)) * nc.b * expm(nc.a_c * cplx(t, 0.0));
        CHECK((detail::magnus_d(nc, t) - direct).max_abs() < 1e-12);
    }
}

TEST_CASE("magnus error scales cubically in gamma", "[oracles]") {
    auto deviation = [](double gamma) {
        NonCommutingSystem nc = NonCommutingSystem::make(1.0, gamma);
        Matrix exact = expm(nc.a_c * cplx(-1.0, 0.0));
        Matrix gen = nc.a_c;
        gen += (nc.b * nc.b) * cplx(0.5 * gamma * gamma, 0.0);
        exact = exact * expm(gen);
        return (noncommuting_magnus_wn(nc, 1.0) - exact).max_abs();
    };
    const double d1 = deviation(0.05);
    const double d2 = deviation(0.025);
    CHECK(d1 / d2 >= 8.0);
}

TEST_CASE("ou magnus second order", "[oracles]") {
    NonCommutingSystem sys = NonCommutingSystem::make(1.0, 0.05);

    // t = 0 gives the identity
    Matrix m0 = ou_magnus_second_order(sys, 0.1, 1e-9);
    CHECK((m0 - Matrix::identity(10)).max_abs() < 1e-8);

    // k = 0 annihilates both correction terms, leaving I + g^2/2 int D^2
    Matrix mk0 = ou_magnus_second_order(sys, 0.0, 1.0);
    int n = 1000;
    Matrix acc = Matrix::zero(10, 10);
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        Matrix d = detail::magnus_d(sys, i * 1e-3);
        acc += (d * d) * cplx(w, 0.0);
    }
    acc *= cplx(1e-3 / 3.0 * 0.5 * 0.05 * 0.05, 0.0);
    Matrix ref = Matrix::identity(10);
    ref += acc;
    CHECK((mk0 - ref).max_abs() < 1e-10);
}

TEST_CASE("ou magnus beats the white-noise form on OU data", "[oracles][slow]") {
    const double gamma = 0.05, k = 0.1, t = 1.0;
    QubitSystem q;
    q.n_qubits = 1;
    q.drift = pauli_x();
    q.channels.push_back({pauli_y(), NoiseSpec::ou(gamma, k), -1});
    ControlPulse pulse = ControlPulse::zero(0, 1000, 1e-3);
    SseSettings st;
    EnsembleStats stats = run_sse_ensemble(q, pulse, QuantumState::ket("0"), st, 10000, 999);

    NonCommutingSystem nc = NonCommutingSystem::make(1.0, gamma);
    const CVec v0 = NonCommutingSystem::v0_from_bloch(0.0, 0.0, 1.0);
    Matrix frame = expm(nc.a_c * cplx(t, 0.0));
    const double f_ou = std::real(frame.apply(ou_magnus_second_order(nc, k, t).apply(v0))[0]);
    const double f_k0 = std::real(frame.apply(ou_magnus_second_order(nc, 0.0, t).apply(v0))[0]);
    const double mc = stats.mean_fidelity[1000];
    CHECK(std::abs(mc - f_ou) < std::abs(mc - f_k0));
}

// Minimal usage example: pure dephasing of |+> under white sigma_Z noise,
// ensemble mean fidelity compared against the closed-form master-equation
// solution (1 + exp(-2 g^2 t)) / 2.

#include <cstdio>

#include "fvqoc/sse.hpp"

using namespace fvqoc;

int main() {
    const double gamma = 0.1;
    QubitSystem sys;
    sys.n_qubits = 1;
    sys.channels.push_back({pauli_z(), NoiseSpec::white_noise(gamma), -1});

    ControlPulse pulse = ControlPulse::zero(0, 1000, 1e-3);
    SseSettings settings;
    EnsembleStats stats =
        run_sse_ensemble(sys, pulse, QuantumState::ket("+"), settings, 5000, 42);

    std::printf("%8s %14s %14s %14s\n", "t", "mean F", "sem", "closed form");
    for (int i = 0; i <= 1000; i += 200) {
        const double t = i * 1e-3;
        const double ref = 0.5 * (1.0 + std::exp(-2.0 * gamma * gamma * t));
        std::printf("%8.2f %14.6f %14.6f %14.6f\n", t, stats.mean_fidelity[i],
                    stats.sem_fidelity[i], ref);
    }
    return 0;
}

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "fvqoc/config.hpp"
#include "fvqoc/io.hpp"

using namespace fvqoc;
using nlohmann::json;

namespace {

json minimal_config() {
    return json::parse(R"({
      "experiment": "optimize",
      "seed": 3,
      "problem": {
        "n_qubits": 1,
        "controls": [{"pauli": "X"}, {"pauli": "Y"}],
        "noise": [{"op": {"pauli": "Z"}, "kind": "ou", "gamma": 0.05, "k": 0.1}],
        "target": {"type": "hamiltonian", "op": {"pauli_terms": [{"coeff": -1.0, "ops": "Y"}]}},
        "grid": {"dt": 0.01, "steps": 100}
      }
    })");
}

}  // namespace

TEST_CASE("minimal config parses", "[config]") {
    RunConfig rc = parse_config(minimal_config());
    CHECK(rc.experiment == Experiment::optimize);
    CHECK(rc.problem.system.n_qubits == 1);
    CHECK(rc.problem.system.controls.size() == 2);
    CHECK(rc.problem.system.channels.size() == 1);
    CHECK(rc.problem.steps == 100);
    CHECK(rc.problem.master_seed == 3);
    CHECK(std::abs(rc.problem.horizon - 1.0) < 1e-15);
    // default initial state |0...0>
    CHECK(std::abs(rc.problem.phi0.amplitudes()[0] - cplx(1.0, 0.0)) < 1e-15);
}

TEST_CASE("validation errors name the offending key", "[config]") {
    json missing_dt = minimal_config();
    missing_dt["problem"]["grid"].erase("dt");
    CHECK_THROWS_WITH(parse_config(missing_dt),
                      Catch::Matchers::ContainsSubstring("problem.grid.dt"));

    json neg_gamma = minimal_config();
    neg_gamma["problem"]["noise"][0]["gamma"] = -0.2;
    CHECK_THROWS_WITH(parse_config(neg_gamma),
                      Catch::Matchers::ContainsSubstring("gamma"));

    json unknown = minimal_config();
    unknown["problem"]["mystery"] = 1;
    CHECK_THROWS_WITH(parse_config(unknown),
                      Catch::Matchers::ContainsSubstring("unknown key"));

    json bad_exp = minimal_config();
    bad_exp["experiment"] = "dance";
    CHECK_THROWS_AS(parse_config(bad_exp), ConfigError);

    json bad_state = minimal_config();
    bad_state["problem"]["state0"] = {{"re", {1.0, 1.0}}};
    CHECK_THROWS_AS(parse_config(bad_state), ConfigError);  // not normalized
}

TEST_CASE("operator parsing forms", "[config]") {
    json cfg = minimal_config();
    cfg["problem"]["drift"] = {{"matrix_re", {{0.0, 1.0}, {1.0, 0.0}}}};
    RunConfig rc = parse_config(cfg);
    CHECK((rc.problem.system.drift - pauli_x()).max_abs() < 1e-15);

    json cfg2 = minimal_config();
    cfg2["problem"]["drift"] = {{"matrix_re", {{0.0, 0.0}, {0.0, 0.0}}},
                                {"matrix_im", {{0.0, -1.0}, {1.0, 0.0}}}};
    RunConfig rc2 = parse_config(cfg2);
    CHECK((rc2.problem.system.drift - pauli_y()).max_abs() < 1e-15);

    // projector as a Pauli sum: |0><0| = (I + Z)/2
    json cfg3 = minimal_config();
    cfg3["problem"]["noise"][0]["op"] = {
        {"pauli_terms", {{{"coeff", 0.5}, {"ops", "I"}}, {{"coeff", 0.5}, {"ops", "Z"}}}}};
    RunConfig rc3 = parse_config(cfg3);
    Matrix p0(2, 2);
    p0(0, 0) = 1.0;
    CHECK((rc3.problem.system.channels[0].op - p0).max_abs() < 1e-15);
}

TEST_CASE("packaged configs parse with the documented parameters", "[config]") {
    const std::string root = std::string(FVQOC_SOURCE_DIR) + "/configs/";

    RunConfig fig2 = load_config(root + "fig2_fixed.json");
    CHECK(fig2.problem.weights.lambda == 0.1);
    CHECK(fig2.problem.weights.mu == 250.0);
    CHECK(fig2.problem.weights.nu == 1.0);
    CHECK(fig2.problem.system.channels[0].spec.gamma == 0.07);
    CHECK(fig2.problem.system.channels[1].spec.gamma == 0.01);
    CHECK(fig2.problem.scaling == ScalingMode::fixed);

    RunConfig fig4 = load_config(root + "fig4_scaled.json");
    CHECK(fig4.problem.weights.mu == 60.0);
    CHECK(fig4.problem.scaling == ScalingMode::scaled);

    RunConfig gate = load_config(root + "gate_fig5.json");
    CHECK(gate.experiment == Experiment::gate);
    CHECK(gate.problem.target_kind == TargetKind::unitary);
    CHECK(gate.problem.system.channels[0].spec.gamma == 0.14);
    CHECK(gate.problem.system.channels[1].spec.gamma == 0.07);

    RunConfig ghz = load_config(root + "ghz_fig7.json");
    CHECK(ghz.problem.weights.lambda == 0.1);
    CHECK(ghz.problem.weights.mu == 600.0);
    CHECK(ghz.problem.weights.nu == 1.0);
    CHECK(ghz.problem.system.n_qubits == 2);
    REQUIRE(ghz.problem.system.has_drift());
    CHECK((ghz.problem.system.drift - kron(pauli_z(), pauli_z())).max_abs() < 1e-15);
    // the target's ground space is spanned by the GHZ state
    auto eig = hermitian_eig(ghz.problem.target);
    CHECK(eig.values.front() == Catch::Approx(-1.0));
    const double r = 1.0 / std::sqrt(2.0);
    CVec ghz_state{cplx(r, 0.0), 0.0, 0.0, cplx(r, 0.0)};
    CVec ground(4);
    for (int i = 0; i < 4; ++i) ground[i] = eig.vectors(i, 0);
    CHECK(std::abs(std::abs(inner(ground, ghz_state)) - 1.0) < 1e-12);
}

TEST_CASE("csv writer round-trips doubles", "[config]") {
    const double values[] = {1.0 / 3.0, 1e-17, -2.5e300, 0.1 + 0.2};
    for (double v : values) {
        const std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
    CsvWriter w({"a", "b"});
    w.row({1.5, 2.5});
    CHECK(w.str() == "a,b\n1.5,2.5\n");
    CHECK_THROWS_AS(w.row({1.0}), ConfigError);
}

TEST_CASE("atomic writes land completely", "[config]") {
    namespace fs = std::filesystem;
    const std::string dir = fs::temp_directory_path() / "fvqoc_io_test";
    ensure_dir(dir);
    const std::string path = dir + "/out.txt";
    write_text_atomic(path, "hello\n");
    CHECK(read_text(path) == "hello\n");
    CHECK(!fs::exists(path + ".tmp"));
    write_text_atomic(path, "replaced\n");
    CHECK(read_text(path) == "replaced\n");
    fs::remove_all(dir);
}

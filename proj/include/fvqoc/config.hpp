#pragma once

// JSON run configuration. The schema mirrors OptimizationProblem; every
// level rejects unknown keys and validation errors name the offending key
// path and the expected type. Operators may be given as Pauli strings,
// weighted Pauli sums, or explicit matrices.

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fvqoc/errors.hpp"
#include "fvqoc/io.hpp"
#include "fvqoc/optimizer.hpp"

namespace fvqoc {

using nlohmann::json;

enum class Experiment { simulate, optimize, gate, benchmark, oracle_check, convergence };

struct RunConfig {
    Experiment experiment = Experiment::simulate;
    OptimizationProblem problem;
    long trials = 0;       // overrides problem trials when > 0 (simulate ensembles)
    std::uint64_t seed = 1;
    std::string output_dir = "results";
    int threads = 0;
    json echo;             // the raw validated document, for provenance
};

namespace cfg_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

inline void check_keys(const json& obj, const std::string& path,
                       const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            fail(path + "." + item.key(), "unknown key");
}

inline const json& require(const json& obj, const std::string& path, const std::string& key,
                           const char* type_name) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, std::string("missing required key (") + type_name + ")");
    return *it;
}

inline double get_number(const json& obj, const std::string& path, const std::string& key) {
    const json& v = require(obj, path, key, "number");
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

inline double get_number_or(const json& obj, const std::string& path, const std::string& key,
                            double fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) fail(path + "." + key, "expected a number");
    return it->get<double>();
}

inline long get_integer(const json& obj, const std::string& path, const std::string& key) {
    const json& v = require(obj, path, key, "integer");
    if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
    return v.get<long>();
}

inline long get_integer_or(const json& obj, const std::string& path, const std::string& key,
                           long fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number_integer()) fail(path + "." + key, "expected an integer");
    return it->get<long>();
}

inline std::string get_string_or(const json& obj, const std::string& path,
                                 const std::string& key, const std::string& fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_string()) fail(path + "." + key, "expected a string");
    return it->get<std::string>();
}

inline Matrix parse_operator(const json& spec, const std::string& path, int dim) {
    if (!spec.is_object()) fail(path, "expected an operator object");
    check_keys(spec, path, {"pauli", "pauli_terms", "matrix_re", "matrix_im"});
    if (spec.contains("pauli")) {
        const std::string label = spec["pauli"].get<std::string>();
        Matrix m = pauli_string(label);
        if (m.rows() != dim) fail(path + ".pauli", "operator dimension does not match n_qubits");
        return m;
    }
    if (spec.contains("pauli_terms")) {
        const json& terms = spec["pauli_terms"];
        if (!terms.is_array() || terms.empty()) fail(path + ".pauli_terms", "expected a nonempty array");
        Matrix m = Matrix::zero(dim, dim);
        int idx = 0;
        for (const auto& term : terms) {
            const std::string tpath = path + ".pauli_terms[" + std::to_string(idx++) + "]";
            check_keys(term, tpath, {"coeff", "ops"});
            const double coeff = get_number(term, tpath, "coeff");
            const std::string ops = require(term, tpath, "ops", "string").get<std::string>();
            Matrix p = pauli_string(ops);
            if (p.rows() != dim) fail(tpath + ".ops", "operator dimension does not match n_qubits");
            p *= cplx(coeff, 0.0);
            m += p;
        }
        return m;
    }
    if (spec.contains("matrix_re")) {
        const json& re = spec["matrix_re"];
        if (!re.is_array() || static_cast<int>(re.size()) != dim)
            fail(path + ".matrix_re", "expected a " + std::to_string(dim) + "-row array");
        Matrix m(dim, dim);
        for (int r = 0; r < dim; ++r) {
            if (!re[r].is_array() || static_cast<int>(re[r].size()) != dim)
                fail(path + ".matrix_re", "rows must have " + std::to_string(dim) + " entries");
            for (int c = 0; c < dim; ++c) m(r, c) = re[r][c].get<double>();
        }
        if (spec.contains("matrix_im")) {
            const json& im = spec["matrix_im"];
            if (!im.is_array() || static_cast<int>(im.size()) != dim)
                fail(path + ".matrix_im", "expected a " + std::to_string(dim) + "-row array");
            for (int r = 0; r < dim; ++r)
                for (int c = 0; c < dim; ++c)
                    m(r, c) += cplx(0.0, im[r][c].get<double>());
        }
        return m;
    }
    fail(path, "operator needs one of: pauli, pauli_terms, matrix_re");
}

inline QuantumState parse_state(const json& spec, const std::string& path, int dim) {
    if (spec.is_string()) {
        QuantumState s = QuantumState::ket(spec.get<std::string>());
        if (s.dim() != dim) fail(path, "state label does not match n_qubits");
        return s;
    }
    if (!spec.is_object()) fail(path, "expected a ket label string or {re, im} object");
    check_keys(spec, path, {"re", "im"});
    const json& re = require(spec, path, "re", "array");
    if (!re.is_array() || static_cast<int>(re.size()) != dim)
        fail(path + ".re", "expected " + std::to_string(dim) + " amplitudes");
    CVec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = re[i].get<double>();
    if (spec.contains("im")) {
        const json& im = spec["im"];
        if (!im.is_array() || static_cast<int>(im.size()) != dim)
            fail(path + ".im", "expected " + std::to_string(dim) + " amplitudes");
        for (int i = 0; i < dim; ++i) v[i] += cplx(0.0, im[i].get<double>());
    }
    try {
        return QuantumState(std::move(v));
    } catch (const ConfigError& e) {
        fail(path, e.what());
    }
}

inline OptimizationProblem parse_problem(const json& p, const std::string& path) {
    check_keys(p, path,
               {"n_qubits", "drift", "controls", "noise", "target", "state0", "grid",
                "weights", "scaling", "mu_zero_after", "iterations", "grad_trials",
                "eval_trials", "step_size", "init_amplitude", "seed", "scheme"});
    OptimizationProblem prob;
    prob.system.n_qubits = static_cast<int>(get_integer(p, path, "n_qubits"));
    if (prob.system.n_qubits < 1 || prob.system.n_qubits > 6)
        fail(path + ".n_qubits", "must be between 1 and 6");
    const int dim = prob.system.dim();

    if (p.contains("drift"))
        prob.system.drift = parse_operator(p["drift"], path + ".drift", dim);

    const json& controls = require(p, path, "controls", "array");
    if (!controls.is_array() || controls.empty()) fail(path + ".controls", "expected a nonempty array");
    for (size_t j = 0; j < controls.size(); ++j)
        prob.system.controls.push_back(
            parse_operator(controls[j], path + ".controls[" + std::to_string(j) + "]", dim));

    if (p.contains("noise")) {
        const json& noise = p["noise"];
        if (!noise.is_array()) fail(path + ".noise", "expected an array");
        for (size_t l = 0; l < noise.size(); ++l) {
            const std::string npath = path + ".noise[" + std::to_string(l) + "]";
            const json& ch = noise[l];
            check_keys(ch, npath, {"op", "kind", "gamma", "k", "init", "coupling"});
            NoiseChannel channel;
            channel.op = parse_operator(require(ch, npath, "op", "object"), npath + ".op", dim);
            const std::string kind = get_string_or(ch, npath, "kind", "ou");
            const double gamma = get_number(ch, npath, "gamma");
            if (gamma < 0.0) fail(npath + ".gamma", "noise strength must be >= 0");
            if (kind == "white") {
                channel.spec = NoiseSpec::white_noise(gamma);
            } else if (kind == "ou") {
                const double k = get_number(ch, npath, "k");
                if (k < 0.0) fail(npath + ".k", "mean reversion must be >= 0");
                channel.spec = NoiseSpec::ou(gamma, k);
            } else {
                fail(npath + ".kind", "expected 'white' or 'ou'");
            }
            const std::string init = get_string_or(ch, npath, "init", "calibrated");
            if (init == "stationary")
                channel.spec.init = NoiseInit::stationary;
            else if (init != "calibrated")
                fail(npath + ".init", "expected 'calibrated' or 'stationary'");
            channel.coupling = static_cast<int>(get_integer_or(ch, npath, "coupling", -1));
            prob.system.channels.push_back(std::move(channel));
        }
    }

    const json& target = require(p, path, "target", "object");
    check_keys(target, path + ".target", {"type", "op", "haar_seed"});
    const std::string ttype = get_string_or(target, path + ".target", "type", "hamiltonian");
    if (ttype == "hamiltonian") {
        prob.target_kind = TargetKind::hamiltonian;
        prob.target = parse_operator(require(target, path + ".target", "op", "object"),
                                     path + ".target.op", dim);
    } else if (ttype == "unitary") {
        prob.target_kind = TargetKind::unitary;
        if (target.contains("haar_seed"))
            prob.target = haar_random_unitary(dim, target["haar_seed"].get<std::uint64_t>());
        else
            prob.target = parse_operator(require(target, path + ".target", "op", "object"),
                                         path + ".target.op", dim);
    } else {
        fail(path + ".target.type", "expected 'hamiltonian' or 'unitary'");
    }

    if (p.contains("state0"))
        prob.phi0 = parse_state(p["state0"], path + ".state0", dim);
    else
        prob.phi0 = QuantumState::basis(dim, 0);

    const json& grid = require(p, path, "grid", "object");
    check_keys(grid, path + ".grid", {"dt", "steps"});
    const double dt = get_number(grid, path + ".grid", "dt");
    if (dt <= 0.0) fail(path + ".grid.dt", "must be > 0");
    prob.steps = static_cast<int>(get_integer(grid, path + ".grid", "steps"));
    if (prob.steps < 1) fail(path + ".grid.steps", "must be >= 1");
    prob.horizon = dt * prob.steps;

    if (p.contains("weights")) {
        const json& w = p["weights"];
        check_keys(w, path + ".weights", {"lambda", "mu", "nu"});
        prob.weights.lambda = get_number_or(w, path + ".weights", "lambda", 0.0);
        prob.weights.mu = get_number_or(w, path + ".weights", "mu", 0.0);
        prob.weights.nu = get_number_or(w, path + ".weights", "nu", 0.0);
        if (prob.weights.lambda < 0 || prob.weights.mu < 0 || prob.weights.nu < 0)
            fail(path + ".weights", "weights must be >= 0");
    }

    const std::string scaling = get_string_or(p, path, "scaling", "fixed");
    if (scaling == "scaled")
        prob.scaling = ScalingMode::scaled;
    else if (scaling != "fixed")
        fail(path + ".scaling", "expected 'fixed' or 'scaled'");

    const std::string scheme = get_string_or(p, path, "scheme", "platen");
    if (scheme == "euler")
        prob.scheme = Scheme::euler;
    else if (scheme != "platen")
        fail(path + ".scheme", "expected 'euler' or 'platen'");

    prob.mu_zero_after = static_cast<int>(get_integer_or(p, path, "mu_zero_after", 25));
    prob.iterations = static_cast<int>(get_integer_or(p, path, "iterations", 45));
    prob.grad_trials = static_cast<int>(get_integer_or(p, path, "grad_trials", 100));
    prob.eval_trials = static_cast<int>(get_integer_or(p, path, "eval_trials", 200));
    prob.step_size = get_number_or(p, path, "step_size", 0.3);
    prob.init_amplitude = get_number_or(p, path, "init_amplitude", 0.1);
    prob.master_seed = static_cast<std::uint64_t>(get_integer_or(p, path, "seed", 1));
    prob.validate();
    return prob;
}

}  // namespace cfg_detail

inline RunConfig parse_config(const json& doc) {
    cfg_detail::check_keys(doc, "config",
                           {"experiment", "seed", "trials", "threads", "output", "problem"});
    RunConfig rc;
    const std::string exp = cfg_detail::get_string_or(doc, "config", "experiment", "simulate");
    if (exp == "simulate") rc.experiment = Experiment::simulate;
    else if (exp == "optimize") rc.experiment = Experiment::optimize;
    else if (exp == "gate") rc.experiment = Experiment::gate;
    else if (exp == "benchmark") rc.experiment = Experiment::benchmark;
    else if (exp == "oracle-check") rc.experiment = Experiment::oracle_check;
    else if (exp == "convergence") rc.experiment = Experiment::convergence;
    else cfg_detail::fail("config.experiment", "unknown experiment '" + exp + "'");

    rc.seed = static_cast<std::uint64_t>(cfg_detail::get_integer_or(doc, "config", "seed", 1));
    rc.trials = cfg_detail::get_integer_or(doc, "config", "trials", 0);
    rc.threads = static_cast<int>(cfg_detail::get_integer_or(doc, "config", "threads", 0));
    rc.output_dir = cfg_detail::get_string_or(doc, "config", "output", "results");
    rc.problem = cfg_detail::parse_problem(
        cfg_detail::require(doc, "config", "problem", "object"), "problem");
    if (doc.contains("seed")) rc.problem.master_seed = rc.seed;
    rc.problem.threads = rc.threads;
    rc.echo = doc;
    return rc;
}

inline RunConfig load_config(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(doc);
}

}  // namespace fvqoc

#pragma once

#include <stdexcept>
#include <string>

namespace fvqoc {

// Bad user input: malformed configs, inconsistent dimensions, missing
// samplers. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during integration or optimization (blowup, loss of
// conditioning). Carries the step index where trouble appeared when known.
// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg, long step_index = -1)
        : std::runtime_error(msg), step(step_index) {}
    long step;
};

}  // namespace fvqoc

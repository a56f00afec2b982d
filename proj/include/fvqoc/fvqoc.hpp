#pragma once

// Umbrella header: simulation of qubit dynamics under classical control
// noise and construction of noise-aware pulses from stochastic adjoint
// gradients.

#include "fvqoc/config.hpp"
#include "fvqoc/convergence.hpp"
#include "fvqoc/errors.hpp"
#include "fvqoc/gradient.hpp"
#include "fvqoc/io.hpp"
#include "fvqoc/linalg.hpp"
#include "fvqoc/noise.hpp"
#include "fvqoc/optimizer.hpp"
#include "fvqoc/oracles.hpp"
#include "fvqoc/parallel.hpp"
#include "fvqoc/rng.hpp"
#include "fvqoc/sde.hpp"
#include "fvqoc/sse.hpp"
#include "fvqoc/transfer.hpp"

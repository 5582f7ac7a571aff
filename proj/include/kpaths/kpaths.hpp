#pragma once

// Umbrella header: transition-path solver for infinite-horizon deterministic
// economic models, fitting kernel expansions of the trajectory derivatives to
// the model's differential-algebraic equations.

#include "config.hpp"
#include "csv.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "kernels.hpp"
#include "levmar.hpp"
#include "model.hpp"
#include "models.hpp"
#include "reference.hpp"
#include "solver.hpp"

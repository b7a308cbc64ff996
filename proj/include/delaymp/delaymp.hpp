#pragma once

// Umbrella header: the full delayed-system maximum-principle toolkit.

#include "adjoint_first.hpp"
#include "adjoint_second.hpp"
#include "brownian.hpp"
#include "config.hpp"
#include "core.hpp"
#include "diagnostics.hpp"
#include "duality.hpp"
#include "forward.hpp"
#include "hamiltonian.hpp"
#include "lift.hpp"
#include "mp_check.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "scenarios.hpp"
#include "state.hpp"
#include "time_grid.hpp"
#include "trace.hpp"
#include "validate.hpp"
#include "variational.hpp"

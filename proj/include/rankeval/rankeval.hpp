#pragma once

// Umbrella header: sampling-based evaluation of ranking systems with
// unbiased importance-sampling estimators, variance-optimal sampling
// distributions, reusable judged collections, and a replication harness.

#include "collection.hpp"    // IWYU pragma: export
#include "core.hpp"          // IWYU pragma: export
#include "estimation.hpp"    // IWYU pragma: export
#include "experiments.hpp"   // IWYU pragma: export
#include "harness.hpp"       // IWYU pragma: export
#include "metrics.hpp"       // IWYU pragma: export
#include "rng.hpp"           // IWYU pragma: export
#include "sampling.hpp"      // IWYU pragma: export

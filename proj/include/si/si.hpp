#pragma once

#include "error.hpp"
#include "types.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "csv.hpp"
#include "panel.hpp"
#include "spectral.hpp"
#include "pcr.hpp"
#include "subspace_test.hpp"
#include "parallel.hpp"
#include "estimator.hpp"
#include "synthgen.hpp"
#include "harness.hpp"
#include "io.hpp"

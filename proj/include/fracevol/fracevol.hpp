#pragma once

#include "fracevol/csv.hpp"
#include "fracevol/error.hpp"
#include "fracevol/evolution.hpp"
#include "fracevol/fbm.hpp"
#include "fracevol/fft.hpp"
#include "fracevol/fraccalc.hpp"
#include "fracevol/grid.hpp"
#include "fracevol/harness.hpp"
#include "fracevol/parallel.hpp"
#include "fracevol/path.hpp"
#include "fracevol/rng.hpp"
#include "fracevol/solver.hpp"
#include "fracevol/spde.hpp"
#include "fracevol/stats.hpp"

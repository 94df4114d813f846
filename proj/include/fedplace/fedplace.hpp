#pragma once

#include "fedplace/aggregation.hpp"
#include "fedplace/cluster.hpp"
#include "fedplace/config.hpp"
#include "fedplace/engine.hpp"
#include "fedplace/error.hpp"
#include "fedplace/experiment.hpp"
#include "fedplace/placement.hpp"
#include "fedplace/population.hpp"
#include "fedplace/report.hpp"
#include "fedplace/rng.hpp"
#include "fedplace/sweep.hpp"
#include "fedplace/time_model.hpp"

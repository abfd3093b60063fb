#pragma once

#include "priorband/bench.hpp"
#include "priorband/distributions.hpp"
#include "priorband/esp.hpp"
#include "priorband/harness.hpp"
#include "priorband/rng.hpp"
#include "priorband/scheduler.hpp"
#include "priorband/search_space.hpp"
#include "priorband/simulator.hpp"
#include "priorband/stats.hpp"

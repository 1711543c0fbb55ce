#pragma once

#include "core.hpp"
#include "exact_bench.hpp"
#include "experiment.hpp"
#include "instance.hpp"
#include "lp_core.hpp"
#include "numerics.hpp"
#include "prcrs.hpp"
#include "rounding.hpp"
#include "simplex.hpp"
#include "star_eptas.hpp"

#pragma once

#include "ergolq/closedloop.hpp"
#include "ergolq/costate.hpp"
#include "ergolq/ergodic.hpp"
#include "ergolq/errors.hpp"
#include "ergolq/grid.hpp"
#include "ergolq/json_io.hpp"
#include "ergolq/linalg.hpp"
#include "ergolq/model.hpp"
#include "ergolq/riccati.hpp"
#include "ergolq/rng.hpp"
#include "ergolq/simulate.hpp"

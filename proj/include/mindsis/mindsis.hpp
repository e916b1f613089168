#pragma once

#include "mindsis/common.hpp"
#include "mindsis/config.hpp"
#include "mindsis/interval_bounds.hpp"
#include "mindsis/milp.hpp"
#include "mindsis/mind.hpp"
#include "mindsis/nn_model.hpp"
#include "mindsis/safety_index.hpp"
#include "mindsis/sim.hpp"
#include "mindsis/sis.hpp"
#include "mindsis/svg.hpp"

#pragma once

#include "errors.hpp"
#include "expanded.hpp"
#include "fleet.hpp"
#include "generator.hpp"
#include "grid.hpp"
#include "markov.hpp"
#include "qp_admm.hpp"
#include "scenario.hpp"
#include "synthesis.hpp"

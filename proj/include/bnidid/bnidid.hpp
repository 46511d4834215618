#pragma once

#include "bnidid/core.hpp"
#include "bnidid/network.hpp"
#include "bnidid/stats.hpp"
#include "bnidid/projection.hpp"
#include "bnidid/spillover.hpp"
#include "bnidid/fixed_effects.hpp"
#include "bnidid/estimator.hpp"
#include "bnidid/analysis.hpp"
#include "bnidid/simulator.hpp"
#include "bnidid/io.hpp"
#include "bnidid/pipeline.hpp"

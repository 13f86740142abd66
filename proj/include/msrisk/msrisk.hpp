#pragma once

#include "msrisk/error.hpp"
#include "msrisk/core.hpp"
#include "msrisk/rng.hpp"
#include "msrisk/special.hpp"
#include "msrisk/mvcdf.hpp"
#include "msrisk/dist.hpp"
#include "msrisk/inference.hpp"
#include "msrisk/predictive.hpp"
#include "msrisk/risk.hpp"
#include "msrisk/shapley.hpp"
#include "msrisk/sim.hpp"
#include "msrisk/json_io.hpp"
#include "msrisk/io.hpp"
#include "msrisk/describe.hpp"
#include "msrisk/pipeline.hpp"

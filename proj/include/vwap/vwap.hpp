#pragma once

#include "vwap/backtest.hpp"
#include "vwap/common.hpp"
#include "vwap/cost_model.hpp"
#include "vwap/dynamic_solver.hpp"
#include "vwap/market_data.hpp"
#include "vwap/model_io.hpp"
#include "vwap/price_model.hpp"
#include "vwap/rng.hpp"
#include "vwap/static_solver.hpp"
#include "vwap/synth.hpp"
#include "vwap/volume_model.hpp"

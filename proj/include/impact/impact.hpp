#pragma once

#include "impact/correlation_lab.hpp"
#include "impact/csv.hpp"
#include "impact/curve_builder.hpp"
#include "impact/errors.hpp"
#include "impact/forecaster.hpp"
#include "impact/impact_models.hpp"
#include "impact/nls_estimator.hpp"
#include "impact/numeric.hpp"
#include "impact/pipeline.hpp"
#include "impact/synth_market.hpp"
#include "impact/trade_ledger.hpp"

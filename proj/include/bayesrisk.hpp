#pragma once

#include "bayesrisk/error.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/dates.hpp"
#include "bayesrisk/csv.hpp"
#include "bayesrisk/marketdata.hpp"
#include "bayesrisk/predictive.hpp"
#include "bayesrisk/dlm.hpp"
#include "bayesrisk/garch.hpp"
#include "bayesrisk/varbacktest.hpp"
#include "bayesrisk/metrics.hpp"
#include "bayesrisk/fraud.hpp"
#include "bayesrisk/compliance.hpp"
#include "bayesrisk/config.hpp"
#include "bayesrisk/harness.hpp"
#include "bayesrisk/report.hpp"
#include "bayesrisk/stream.hpp"
#include "bayesrisk/synthetic.hpp"

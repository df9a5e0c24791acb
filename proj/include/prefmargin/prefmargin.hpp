#pragma once

// Umbrella header.

#include "prefmargin/aggregate.hpp"
#include "prefmargin/errors.hpp"
#include "prefmargin/judges.hpp"
#include "prefmargin/metrics.hpp"
#include "prefmargin/prefdata.hpp"
#include "prefmargin/rewardmodel.hpp"
#include "prefmargin/series_metrics.hpp"
#include "prefmargin/simpop.hpp"

#pragma once

// Umbrella header.

#include "trialrisk/cascade.hpp"
#include "trialrisk/common.hpp"
#include "trialrisk/csv.hpp"
#include "trialrisk/dataset.hpp"
#include "trialrisk/ebm.hpp"
#include "trialrisk/evaluation.hpp"
#include "trialrisk/gbdt.hpp"
#include "trialrisk/learner.hpp"
#include "trialrisk/missingness.hpp"
#include "trialrisk/model.hpp"
#include "trialrisk/reporting.hpp"
#include "trialrisk/splitting.hpp"
#include "trialrisk/stats.hpp"
#include "trialrisk/synthgen.hpp"
#include "trialrisk/targets.hpp"
#include "trialrisk/tuning.hpp"

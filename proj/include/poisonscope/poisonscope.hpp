#pragma once

#include "poisonscope/attack_estimator.hpp"
#include "poisonscope/common.hpp"
#include "poisonscope/core_index.hpp"
#include "poisonscope/csv.hpp"
#include "poisonscope/defense_eval.hpp"
#include "poisonscope/domain_audit.hpp"
#include "poisonscope/reversion_model.hpp"
#include "poisonscope/simulator.hpp"
#include "poisonscope/snapshot_timing.hpp"
#include "poisonscope/traffic_detector.hpp"
#include "poisonscope/url.hpp"

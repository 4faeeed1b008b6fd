#pragma once

// Defenses: randomized crawl order, time-gated snapshots that apply trusted
// reversions during a hold, and integrity hashes (with their utility cost).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonscope/core_index.hpp"
#include "poisonscope/reversion_model.hpp"
#include "poisonscope/simulator.hpp"

namespace poisonscope {

struct DefenseReport {
  std::string defense_name;
  double fraction = 0;  // protected or surviving, depending on defense
  std::string fraction_kind;
  std::map<std::string, double> parameters;
};

inline nlohmann::ordered_json to_json(const DefenseReport& r) {
  nlohmann::ordered_json j;
  j["defense"] = r.defense_name;
  j[r.fraction_kind] = r.fraction;
  j["parameters"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.parameters) {
    if (std::isinf(v)) j["parameters"][k] = "inf";
    else j["parameters"][k] = v;
  }
  return j;
}

/// If crawl order is uniformly random over `window` seconds, an edit that is
/// reverted after `delta` seconds is only captured when the crawl lands inside
/// that delta: protected fraction 1 - delta/window.
inline double randomized_order_protection(double delta, double window) {
  if (!(window > 0)) throw InputError("window must be positive");
  if (!(delta >= 0)) throw InputError("delta must be nonnegative");
  return std::max(0.0, 1.0 - delta / window);
}

struct TimeGateResult {
  double surviving_baseline = 0;
  double surviving_held = 0;
  double reduction_factor = 1;  // +inf when nothing survives the hold
};

inline TimeGateResult time_gate_reduction(const EmpiricalCdf& cdf, double baseline_window, double hold_window) {
  if (!(baseline_window >= 0) || !(hold_window >= baseline_window)) {
    throw InputError("time gate requires hold_window >= baseline_window >= 0");
  }
  TimeGateResult r;
  const auto n = cdf.n();
  const auto keep_base = n - cdf.count_at_most(baseline_window);
  const auto keep_held = n - cdf.count_at_most(hold_window);
  r.surviving_baseline = static_cast<double>(keep_base) / static_cast<double>(n);
  r.surviving_held = static_cast<double>(keep_held) / static_cast<double>(n);
  r.reduction_factor = keep_held == 0 ? std::numeric_limits<double>::infinity()
                                      : static_cast<double>(keep_base) / static_cast<double>(keep_held);
  return r;
}

struct HashDefenseCost {
  double protection = 1.0;  // every modified entry is rejected
  double utility_cost = 0;  // live entries dropped for a mismatch
};

inline HashDefenseCost hash_defense_cost(const IntegrityReport& report) {
  if (report.live == 0) throw InputError("hash defense cost undefined with no live entries");
  return {1.0, static_cast<double>(report.hash_mismatch) / static_cast<double>(report.live)};
}

// ---- simulated defenses ---------------------------------------------------------

struct RandomizedOrder {
  std::uint64_t seed = 0;
};

struct TimeGate {
  double hold_seconds = 0;
};

using Defense = std::variant<RandomizedOrder, TimeGate>;

struct SimulatedDefense {
  double attack_success = 0;
  double protected_fraction = 0;  // 1 - attack_success
};

/// Crawl times of the second snapshot with each job's order shuffled: the
/// same set of crawl slots, assigned by a seeded Fisher-Yates permutation.
inline std::vector<double> shuffled_crawl_times(const sim::SimWorld& world, std::uint64_t seed) {
  std::vector<double> times = world.true_times[1];
  sim::Xoshiro256 rng(seed);
  const auto& meta = world.snapshots[1];
  std::size_t begin = 0;
  for (std::size_t j = 0; j < meta.job_count(); ++j) {
    const std::size_t end = j < meta.job_boundaries.size() ? meta.job_boundaries[j] - 1 : times.size();
    for (std::size_t i = end; i > begin + 1; --i) {
      auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - begin - 1)));
      std::swap(times[i - 1], times[begin + k]);
    }
    begin = end;
  }
  return times;
}

/// Reruns the attack (edits at predicted + a) with the defense in place.
/// RandomizedOrder keeps the attacker's linear-schedule predictions but
/// shuffles the real crawl order; TimeGate applies every reversion that lands
/// within the hold.
inline SimulatedDefense simulate_defenses(const sim::SimWorld& world, const SchedulePrediction& predictions,
                                          const Defense& defense, double a = 0) {
  sim::AttackOptions options;
  options.delay_seed = sim::attack_seed(world.config);
  sim::SimOutcome outcome;
  if (const auto* r = std::get_if<RandomizedOrder>(&defense)) {
    auto times = shuffled_crawl_times(world, r->seed);
    outcome = sim::run_attack(times, predictions, a, world.config.reversion_delay, options);
  } else {
    options.hold_seconds = std::get<TimeGate>(defense).hold_seconds;
    outcome = sim::run_attack(world, predictions, a, world.config.reversion_delay, options);
  }
  return {outcome.success, 1.0 - outcome.success};
}

}  // namespace poisonscope

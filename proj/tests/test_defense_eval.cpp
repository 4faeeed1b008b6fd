#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace poisonscope;

TEST(RandomizedOrder, ClosedForm) {
  EXPECT_NEAR(randomized_order_protection(9000, 86400), 0.8958, 5e-5);
  EXPECT_EQ(randomized_order_protection(0, 86400), 1.0);
  EXPECT_EQ(randomized_order_protection(86400, 86400), 0.0);
  EXPECT_EQ(randomized_order_protection(1e9, 86400), 0.0);
  EXPECT_THROW(randomized_order_protection(1, 0), InputError);
  EXPECT_THROW(randomized_order_protection(-1, 10), InputError);
}

TEST(TimeGate, ReductionFactor) {
  EmpiricalCdf cdf({60, 120, 180, 240, 300, 1000, 5000, 20000, 80000, 200000});
  auto r = time_gate_reduction(cdf, 300, 86400);
  EXPECT_DOUBLE_EQ(r.surviving_baseline, 0.5);
  EXPECT_DOUBLE_EQ(r.surviving_held, 0.1);
  EXPECT_EQ(r.reduction_factor, 5.0);
  EXPECT_EQ(time_gate_reduction(cdf, 300, 300).reduction_factor, 1.0);
  EXPECT_TRUE(std::isinf(time_gate_reduction(cdf, 300, 1e9).reduction_factor));
  EXPECT_THROW(time_gate_reduction(cdf, 300, 200), InputError);
}

TEST(HashDefense, Costs) {
  IntegrityReport r;
  r.total = 3'300'000;
  r.missing = 400'000;
  r.live = 2'900'000;
  r.hash_match = 1'100'000;
  r.hash_mismatch = 1'800'000;
  auto c = hash_defense_cost(r);
  EXPECT_EQ(c.protection, 1.0);
  EXPECT_NEAR(c.utility_cost, 0.6207, 5e-5);
  r.hash_mismatch = 0;
  EXPECT_EQ(hash_defense_cost(r).utility_cost, 0.0);
  r.live = 10;
  r.hash_mismatch = 3;
  EXPECT_DOUBLE_EQ(hash_defense_cost(r).utility_cost, 0.3);
  r.live = 0;
  EXPECT_THROW(hash_defense_cost(r), InputError);
}

namespace {

sim::StagedWorld staged() {
  sim::SimConfig c;
  c.n_articles = 2000;
  c.n_jobs = 2;
  c.seed = 21;
  return sim::stage_world(c);
}

}  // namespace

TEST(SimulatedDefenses, TimeGateExtremes) {
  auto st = staged();
  auto undefended = sim::run_attack(st.world, st.prediction, -600, st.world.config.reversion_delay,
                                    {0, sim::attack_seed(st.world.config)});
  auto zero = simulate_defenses(st.world, st.prediction, TimeGate{0}, -600);
  EXPECT_EQ(zero.attack_success, undefended.success);
  EXPECT_GT(zero.attack_success, 0.0);
  auto huge = simulate_defenses(st.world, st.prediction, TimeGate{1e12}, -600);
  EXPECT_EQ(huge.attack_success, 0.0);
  EXPECT_EQ(huge.protected_fraction, 1.0);
}

TEST(SimulatedDefenses, ShuffleKeepsSlotsWithinJobs) {
  auto st = staged();
  auto shuffled = shuffled_crawl_times(st.world, 5);
  const auto& truth = st.world.true_times[1];
  const std::size_t cut = st.world.snapshots[1].job_boundaries.at(0) - 1;
  auto a = std::vector<double>(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(cut));
  auto b = std::vector<double>(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(cut));
  EXPECT_NE(a, b);
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(shuffled_crawl_times(st.world, 5), shuffled);
}

TEST(SimulatedDefenses, RandomizedOrderCutsSuccess) {
  auto st = staged();
  auto plain = simulate_defenses(st.world, st.prediction, TimeGate{0}, -300);
  auto shuffled = simulate_defenses(st.world, st.prediction, RandomizedOrder{7}, -300);
  EXPECT_LT(shuffled.attack_success, plain.attack_success / 2);
}

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace poisonscope;

namespace {

struct ConstCdf {
  double v;
  double evaluate(double) const { return v; }
};

}  // namespace

TEST(ArticleTerm, HandExamples) {
  EmpiricalCdf cdf({100, 200, 300, 400, 500, 5000, 6000, 7000, 8000, 9000});
  AttackArticle art{1, 1000, 1000, 1600};
  // Edit at 1000 with 600 s to go: half the delays fit inside the window.
  EXPECT_DOUBLE_EQ(article_success(art, 0, cdf), 0.5);
  EXPECT_DOUBLE_EQ(article_success(art, 1, cdf), 0.0);
  EXPECT_DOUBLE_EQ(article_success(art, -1000, cdf), 0.5);
  EXPECT_DOUBLE_EQ(article_success(art, 0, ConstCdf{0}), 1.0);
  EXPECT_DOUBLE_EQ(article_success(AttackArticle{1, 1000, 1000, 1000}, 0, ConstCdf{0}), 0.0);
}

TEST(ArticleTerm, SixtyPercentExample) {
  EmpiricalCdf cdf({10, 20, 3000, 4000, 5000});
  AttackArticle art{1, 2000, 2000, 2500};
  EXPECT_DOUBLE_EQ(article_success(art, 0, cdf), 0.6);
}

TEST(Estimate, MeanOfTerms) {
  std::vector<AttackArticle> arts = {{1, 1000, 1000, 1600}, {2, 1000, 900, 1600}};
  EmpiricalCdf cdf({100, 200, 300, 400, 500, 5000, 6000, 7000, 8000, 9000});
  auto est = estimate(arts, 0, cdf, true);
  EXPECT_DOUBLE_EQ(est.success_fraction, 0.25);
  ASSERT_TRUE(est.per_article_terms);
  EXPECT_EQ(*est.per_article_terms, (std::vector<double>{0.5, 0.0}));
  EXPECT_THROW(estimate(std::vector<AttackArticle>{}, 0, cdf), InputError);
  EXPECT_THROW(estimate(std::vector<AttackArticle>{{1, 0, 5, 4}}, 0, cdf), InputError);
}

TEST(Estimate, BoundedAndMonotoneInEarlierEdits) {
  std::mt19937_64 rng(3);
  std::vector<std::int64_t> ds(200);
  for (auto& d : ds) d = static_cast<std::int64_t>(rng() % 20000);
  EmpiricalCdf cdf(ds);
  std::vector<AttackArticle> arts;
  for (ArticleId id = 1; id <= 300; ++id) {
    double lo = 1e6 + static_cast<double>(rng() % 10000);
    arts.push_back({id, lo + static_cast<double>(rng() % 2000) - 1000, lo, lo + static_cast<double>(rng() % 5000)});
  }
  for (double a = -30000; a <= 30000; a += 500) {
    auto v = estimate(arts, a, cdf).success_fraction;
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Sweep, TiesGoToSmallestA) {
  std::vector<AttackArticle> arts = {{1, 0, 0, 10}};
  auto r = sweep(arts, ConstCdf{1}, -100, 100, 10);
  EXPECT_EQ(r.best_a, -100);
  EXPECT_EQ(r.best_success, 0);
  EXPECT_EQ(r.curve.size(), 21u);
  EXPECT_THROW(sweep(arts, ConstCdf{1}, 0, 10, 0), InputError);
  EXPECT_THROW(sweep(arts, ConstCdf{1}, 10, 0, 1), InputError);
}

TEST(Sweep, PlantedPeak) {
  // Predictions run 1800 s late; every second earlier adds revert risk.
  std::vector<std::int64_t> delays(10000);
  for (std::size_t i = 0; i < delays.size(); ++i) delays[i] = static_cast<std::int64_t>(i + 1);
  EmpiricalCdf cdf(delays);
  std::vector<AttackArticle> arts;
  for (ArticleId id = 1; id <= 50; ++id) {
    const double t = 1e6 + 100.0 * static_cast<double>(id);
    arts.push_back({id, t + 1800, t, t + 100});
  }
  auto r = sweep(arts, cdf, -3600, 3600, 60);
  EXPECT_EQ(r.best_a, -1800);
  EXPECT_NEAR(r.best_success, 0.99, 1e-12);
  EXPECT_NEAR(estimate(arts, -1860, cdf).success_fraction, 0.984, 1e-12);
  EXPECT_EQ(estimate(arts, -1740, cdf).success_fraction, 0.0);
}

TEST(Sweep, WorkerCountIndependent) {
  std::mt19937_64 rng(9);
  std::vector<std::int64_t> ds(100);
  for (auto& d : ds) d = static_cast<std::int64_t>(rng() % 10000);
  EmpiricalCdf cdf(ds);
  std::vector<AttackArticle> arts;
  for (ArticleId id = 1; id <= 500; ++id) {
    double lo = static_cast<double>(rng() % 100000);
    arts.push_back({id, lo + static_cast<double>(rng() % 600), lo, lo + static_cast<double>(rng() % 3000)});
  }
  auto one = sweep(arts, cdf, -5000, 5000, 37, 1);
  auto four = sweep(arts, cdf, -5000, 5000, 37, 4);
  ASSERT_EQ(one.curve.size(), four.curve.size());
  for (std::size_t k = 0; k < one.curve.size(); ++k) EXPECT_EQ(one.curve[k].success, four.curve[k].success);
  EXPECT_EQ(one.best_a, four.best_a);
}

TEST(AttackCsv, RoundTripAndJoin) {
  std::vector<AttackArticle> arts = {{3, 10.5, 9, 12}, {7, 1e9 + 0.25, 1e9, 1e9 + 10}};
  std::stringstream ss;
  write_attack_csv(ss, arts);
  auto back = read_attack_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].predicted, arts[1].predicted);
  EXPECT_EQ(back[0].high, 12);

  SchedulePrediction pred{0, 0, {{1, 50}, {2, 60}}};
  IntervalSet set;
  set.intervals = {{1, 40, 55, 0, false}, {2, 45, 70, 0, false}};
  auto joined = join_attack_input(pred, set);
  ASSERT_EQ(joined.size(), 2u);
  EXPECT_EQ(joined[1].low, 45);
  SchedulePrediction missing{0, 0, {{9, 50}}};
  EXPECT_TRUE(join_attack_input(missing, set).empty());
}

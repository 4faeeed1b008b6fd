#pragma once

// Frontrunning success estimate A(a): the fraction of articles whose
// malicious edit, placed at predicted + a, is neither too late (after the
// crawl) nor reverted before the crawl reaches it. Uses the conservative
// bounds of each article's true crawl time.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "poisonscope/common.hpp"
#include "poisonscope/csv.hpp"
#include "poisonscope/reversion_model.hpp"
#include "poisonscope/snapshot_timing.hpp"

namespace poisonscope {

/// A reversion-delay distribution: evaluate(t) = P(reverted within t seconds).
template <typename T>
concept RevertCdf = requires(const T& cdf, double t) {
  { cdf.evaluate(t) } -> std::convertible_to<double>;
};

struct AttackArticle {
  ArticleId article_id = 0;
  double predicted = 0;  // predicted crawl time
  double low = 0;        // lower bound on the true crawl time
  double high = 0;       // upper bound on the true crawl time
};

inline void validate(std::span<const AttackArticle> articles) {
  if (articles.empty()) throw InputError("attack input is empty");
  for (const auto& a : articles) {
    if (!(a.low <= a.high)) throw InputError("article " + std::to_string(a.article_id) + ": low > high");
  }
}

/// (1 - P(reverted before high)) * (1 - [edit after low]). An edit placed at
/// or after `high` counts as reverted; an edit exactly at `low` is on time.
template <RevertCdf Cdf>
double article_success(const AttackArticle& article, double a, const Cdf& cdf) {
  const double edit = article.predicted + a;
  if (edit > article.low) return 0.0;
  const double reverted = edit < article.high ? static_cast<double>(cdf.evaluate(article.high - edit)) : 1.0;
  return 1.0 - reverted;
}

struct AttackEstimate {
  double a = 0;
  double success_fraction = 0;
  std::optional<std::vector<double>> per_article_terms;
};

/// Mean of per-article terms, summed in input order.
template <RevertCdf Cdf>
AttackEstimate estimate(std::span<const AttackArticle> articles, double a, const Cdf& cdf, bool keep_terms = false) {
  validate(articles);
  AttackEstimate est;
  est.a = a;
  if (keep_terms) est.per_article_terms.emplace().reserve(articles.size());
  double sum = 0;
  for (const auto& art : articles) {
    double term = article_success(art, a, cdf);
    sum += term;
    if (keep_terms) est.per_article_terms->push_back(term);
  }
  est.success_fraction = sum / static_cast<double>(articles.size());
  return est;
}

struct SweepPoint {
  double a = 0;
  double success = 0;
};

struct SweepResult {
  double best_a = 0;
  double best_success = 0;
  std::vector<SweepPoint> curve;
};

/// Grid a_min, a_min + step, ... <= a_max.
inline std::vector<double> sweep_grid(double a_min, double a_max, double a_step) {
  if (!(a_step > 0)) throw InputError("sweep step must be positive");
  if (!(a_min <= a_max)) throw InputError("sweep requires a_min <= a_max");
  const auto n = static_cast<std::size_t>(std::floor((a_max - a_min) / a_step + 1e-9)) + 1;
  std::vector<double> grid(n);
  for (std::size_t k = 0; k < n; ++k) grid[k] = a_min + static_cast<double>(k) * a_step;
  return grid;
}

/// Evaluates A on the grid and returns the maximiser; ties go to the smallest a.
template <RevertCdf Cdf>
SweepResult sweep(std::span<const AttackArticle> articles, const Cdf& cdf, double a_min, double a_max, double a_step,
                  std::size_t workers = 1) {
  validate(articles);
  auto grid = sweep_grid(a_min, a_max, a_step);
  SweepResult result;
  result.curve.resize(grid.size());
  parallel_for(grid.size(), workers, [&](std::size_t k) {
    result.curve[k] = {grid[k], estimate(articles, grid[k], cdf).success_fraction};
  });
  result.best_a = result.curve.front().a;
  result.best_success = result.curve.front().success;
  for (const auto& p : result.curve) {
    if (p.success > result.best_success) {
      result.best_a = p.a;
      result.best_success = p.success;
    }
  }
  return result;
}

// ---- file formats ---------------------------------------------------------

/// `article,predicted,low,high`
inline std::vector<AttackArticle> read_attack_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"article", "predicted", "low", "high"});
  std::vector<AttackArticle> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 4) throw InputError("attack record " + std::to_string(reader.record_number()) + ": expected 4 fields");
    out.push_back({parse_int<ArticleId>(row[0], "article"), parse_double(row[1], "predicted"),
                   parse_double(row[2], "low"), parse_double(row[3], "high")});
  }
  validate(out);
  return out;
}

inline void write_attack_csv(std::ostream& out, std::span<const AttackArticle> articles) {
  csv::write_row(out, {"article", "predicted", "low", "high"});
  for (const auto& a : articles) {
    csv::write_row(out, {std::to_string(a.article_id), format_double(a.predicted), format_double(a.low),
                         format_double(a.high)});
  }
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> curve) {
  csv::write_row(out, {"a", "success"});
  for (const auto& p : curve) csv::write_row(out, {format_double(p.a), format_double(p.success)});
}

/// Joins predictions with the (post-hoc) intervals of the attacked snapshot.
/// Articles missing from either side are skipped.
inline std::vector<AttackArticle> join_attack_input(const SchedulePrediction& pred, const IntervalSet& intervals) {
  std::vector<AttackArticle> out;
  for (const auto& iv : intervals.intervals) {
    auto it = pred.predicted.find(iv.article_id);
    if (it == pred.predicted.end()) continue;
    out.push_back({iv.article_id, it->second, static_cast<double>(iv.low), static_cast<double>(iv.high)});
  }
  return out;
}

}  // namespace poisonscope

#pragma once

// Rolling-snapshot timing. Given an edit log and a snapshot's captured
// revisions, bound each article's crawl time with a per-job monotone envelope,
// fit a line per crawl job, and shift the fit onto the next snapshot.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonscope/common.hpp"
#include "poisonscope/csv.hpp"

namespace poisonscope {

struct EditRecord {
  ArticleId article_id = 0;
  RevisionId revision_id = 0;
  EpochSeconds edit_epoch = 0;
  std::string comment;

  friend bool operator==(const EditRecord&, const EditRecord&) = default;
};

inline bool edit_order(const EditRecord& a, const EditRecord& b) {
  return a.article_id != b.article_id ? a.article_id < b.article_id : a.revision_id < b.revision_id;
}

struct SnapshotMeta {
  std::string snapshot_id;
  EpochSeconds start_epoch = 0;
  /// First article id of jobs 1..n-1; job 0 covers every id below the first cut.
  std::vector<ArticleId> job_boundaries;
  std::map<ArticleId, RevisionId> captured_revision;

  std::size_t job_count() const { return job_boundaries.size() + 1; }

  std::size_t job_of(ArticleId id) const {
    return static_cast<std::size_t>(std::upper_bound(job_boundaries.begin(), job_boundaries.end(), id) -
                                    job_boundaries.begin());
  }
};

inline void validate(const SnapshotMeta& meta) {
  if (meta.start_epoch <= 0) throw InputError("snapshot " + meta.snapshot_id + ": start_epoch must be positive");
  for (std::size_t i = 1; i < meta.job_boundaries.size(); ++i) {
    if (meta.job_boundaries[i] <= meta.job_boundaries[i - 1]) {
      throw InputError("snapshot " + meta.snapshot_id + ": job boundaries must be strictly ascending");
    }
  }
}

enum class Membership { Included, Excluded, ArticleAbsent };

/// Edits must be sorted by (article, revision).
inline std::vector<Membership> classify_membership(std::span<const EditRecord> edits, const SnapshotMeta& meta) {
  std::vector<Membership> out;
  out.reserve(edits.size());
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (i > 0 && !edit_order(edits[i - 1], edits[i])) {
      throw InputError("edits not sorted by (article, revision) at article " + std::to_string(edits[i].article_id));
    }
    auto it = meta.captured_revision.find(edits[i].article_id);
    if (it == meta.captured_revision.end()) {
      out.push_back(Membership::ArticleAbsent);
    } else {
      out.push_back(edits[i].revision_id <= it->second ? Membership::Included : Membership::Excluded);
    }
  }
  return out;
}

struct ArticleInterval {
  ArticleId article_id = 0;
  EpochSeconds low = 0;
  EpochSeconds high = 0;
  std::size_t job_index = 0;
  /// `high` came from the open-ended seed (no later evidence and no known
  /// next snapshot start), so it is not a real bound.
  bool high_open = false;
};

struct IntervalSet {
  std::vector<ArticleInterval> intervals;  // ascending article id
  bool open_ended = false;                 // upper seed was max edit epoch + 1
};

namespace detail {

struct ArticleBounds {
  std::optional<EpochSeconds> last_included;
  std::optional<EpochSeconds> first_excluded;
};

inline std::map<ArticleId, ArticleBounds> per_article_bounds(std::span<const EditRecord> edits,
                                                             std::span<const Membership> memberships) {
  if (edits.size() != memberships.size()) throw InputError("memberships not aligned with edits");
  std::map<ArticleId, ArticleBounds> bounds;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (memberships[i] == Membership::ArticleAbsent) continue;
    auto& b = bounds[edits[i].article_id];
    auto t = edits[i].edit_epoch;
    if (memberships[i] == Membership::Included) {
      b.last_included = b.last_included ? std::max(*b.last_included, t) : t;
    } else {
      b.first_excluded = b.first_excluded ? std::min(*b.first_excluded, t) : t;
    }
  }
  return bounds;
}

}  // namespace detail

/// Monotone envelope bounds on every captured article's crawl time.
///
/// Within a job, articles are crawled in id order, so any edit included in an
/// earlier article bounds the crawl time from below and any edit excluded from
/// a later article bounds it from above. The lower bound is the running
/// maximum of included edit times (seeded with the snapshot start), the upper
/// bound the suffix minimum of excluded edit times (seeded with
/// `next_start_epoch`, or the latest edit + 1 when that is unknown).
///
/// Throws ContradictionError when an article's own excluded edit precedes its
/// included one, or the envelope closes (low > high).
inline IntervalSet infer_intervals(std::span<const EditRecord> edits, std::span<const Membership> memberships,
                                   const SnapshotMeta& meta, std::optional<EpochSeconds> next_start_epoch = {}) {
  validate(meta);
  auto bounds = detail::per_article_bounds(edits, memberships);

  IntervalSet set;
  EpochSeconds upper_seed = 0;
  if (next_start_epoch) {
    upper_seed = *next_start_epoch;
  } else {
    EpochSeconds latest = meta.start_epoch;
    for (const auto& e : edits) latest = std::max(latest, e.edit_epoch);
    upper_seed = latest + 1;
    set.open_ended = true;
  }

  for (const auto& [id, b] : bounds) {
    if (b.last_included && b.first_excluded && *b.first_excluded < *b.last_included) {
      throw ContradictionError("article " + std::to_string(id) + ": excluded edit at " +
                               std::to_string(*b.first_excluded) + " precedes included edit at " +
                               std::to_string(*b.last_included));
    }
  }

  set.intervals.reserve(meta.captured_revision.size());
  for (const auto& [id, rev] : meta.captured_revision) {
    (void)rev;
    set.intervals.push_back({id, 0, 0, meta.job_of(id), false});
  }

  auto lookup = [&](ArticleId id) -> const detail::ArticleBounds* {
    auto it = bounds.find(id);
    return it == bounds.end() ? nullptr : &it->second;
  };

  // Forward pass: running max of included edits, reset at each job start.
  std::size_t begin = 0;
  while (begin < set.intervals.size()) {
    std::size_t end = begin;
    const auto job = set.intervals[begin].job_index;
    while (end < set.intervals.size() && set.intervals[end].job_index == job) ++end;

    EpochSeconds low = meta.start_epoch;
    for (std::size_t i = begin; i < end; ++i) {
      if (auto* b = lookup(set.intervals[i].article_id); b && b->last_included) low = std::max(low, *b->last_included);
      set.intervals[i].low = low;
    }
    EpochSeconds high = upper_seed;
    bool open = set.open_ended;
    for (std::size_t i = end; i-- > begin;) {
      if (auto* b = lookup(set.intervals[i].article_id); b && b->first_excluded && *b->first_excluded < high) {
        high = *b->first_excluded;
        open = false;
      }
      set.intervals[i].high = high;
      set.intervals[i].high_open = open;
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto& iv = set.intervals[i];
      if (iv.low > iv.high) {
        throw ContradictionError("article " + std::to_string(iv.article_id) + ": envelope closed in job " +
                                 std::to_string(job) + " (low " + std::to_string(iv.low) + " > high " +
                                 std::to_string(iv.high) + ")");
      }
    }
    begin = end;
  }
  return set;
}

/// Fraction of classified edits whose membership agrees with a per-job
/// schedule (included iff edit time <= scheduled time). Diagnostic only.
template <typename Schedule>
double membership_agreement(std::span<const EditRecord> edits, std::span<const Membership> memberships,
                            Schedule&& scheduled_time) {
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (memberships[i] == Membership::ArticleAbsent) continue;
    auto t = scheduled_time(edits[i].article_id);
    if (!t) continue;
    ++total;
    bool predicted_in = static_cast<double>(edits[i].edit_epoch) <= *t;
    agree += predicted_in == (memberships[i] == Membership::Included);
  }
  return total == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(total);
}

// ---- per-job linear fits --------------------------------------------------

struct JobFit {
  std::size_t job_index = 0;
  double slope = 0.0;      // seconds per article id
  double intercept = 0.0;  // epoch seconds at article id 0
  double mean_abs_bound_error = 0.0;
  std::size_t n_articles = 0;

  double at(ArticleId id) const { return intercept + slope * static_cast<double>(id); }
};

struct FitOptions {
  /// Regression weight of intervals with an open upper end; their lower
  /// bound stands in for the midpoint.
  double single_sided_weight = 0.5;
};

/// Weighted least squares of interval midpoints against article id.
inline JobFit fit_job(std::span<const ArticleInterval> intervals, const FitOptions& options = {}) {
  if (intervals.size() < 2) throw InputError("fit_job needs at least two articles");
  const auto job = intervals.front().job_index;
  std::size_t closed = 0;
  double sw = 0, sx = 0, sy = 0;
  for (const auto& iv : intervals) {
    if (iv.job_index != job) throw InputError("fit_job given intervals from more than one job");
    double w = iv.high_open ? options.single_sided_weight : 1.0;
    double y = iv.high_open ? static_cast<double>(iv.low) : 0.5 * (static_cast<double>(iv.low) + static_cast<double>(iv.high));
    sw += w;
    sx += w * static_cast<double>(iv.article_id);
    sy += w * y;
    closed += !iv.high_open;
  }
  if (closed == 0) throw InputError("job " + std::to_string(job) + ": every interval is open-ended");
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (const auto& iv : intervals) {
    double w = iv.high_open ? options.single_sided_weight : 1.0;
    double y = iv.high_open ? static_cast<double>(iv.low) : 0.5 * (static_cast<double>(iv.low) + static_cast<double>(iv.high));
    double dx = static_cast<double>(iv.article_id) - mx;
    sxx += w * dx * dx;
    sxy += w * dx * (y - my);
  }
  if (sxx <= 0) throw InputError("job " + std::to_string(job) + ": article ids are not distinct");
  JobFit fit;
  fit.job_index = job;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.n_articles = intervals.size();
  if (!(fit.slope > 0)) {
    throw ContradictionError("job " + std::to_string(job) + ": fitted crawl slope is not positive");
  }
  double err = 0;
  for (const auto& iv : intervals) {
    if (iv.high_open) continue;
    double f = fit.at(iv.article_id);
    err += std::max(std::abs(f - static_cast<double>(iv.low)), std::abs(f - static_cast<double>(iv.high)));
  }
  fit.mean_abs_bound_error = err / static_cast<double>(closed);
  return fit;
}

/// One fit per job present in `set`, ordered by job index.
inline std::vector<JobFit> fit_jobs(const IntervalSet& set, const FitOptions& options = {}) {
  std::vector<JobFit> fits;
  std::size_t begin = 0;
  const auto& ivs = set.intervals;
  while (begin < ivs.size()) {
    std::size_t end = begin;
    while (end < ivs.size() && ivs[end].job_index == ivs[begin].job_index) ++end;
    fits.push_back(fit_job(std::span(ivs).subspan(begin, end - begin), options));
    begin = end;
  }
  return fits;
}

// ---- extrapolation ---------------------------------------------------------

struct SchedulePrediction {
  EpochSeconds prev_start = 0;
  EpochSeconds next_start = 0;
  std::map<ArticleId, double> predicted;
};

namespace detail {

inline const JobFit& fit_for(std::span<const JobFit> fits, std::size_t job, ArticleId id) {
  for (const auto& f : fits) {
    if (f.job_index == job) return f;
  }
  throw InputError("article " + std::to_string(id) + " falls in job " + std::to_string(job) + " which has no fit");
}

}  // namespace detail

/// predicted(i) = next_start + (fit_prev(i) - prev_start). Job membership uses
/// `prev_meta`'s boundaries unless `boundaries_override` is given.
inline SchedulePrediction predict_next(std::span<const JobFit> prev_fits, const SnapshotMeta& prev_meta,
                                       EpochSeconds next_start_epoch, std::span<const ArticleId> articles,
                                       const std::optional<std::vector<ArticleId>>& boundaries_override = {}) {
  SnapshotMeta layout;
  layout.job_boundaries = boundaries_override.value_or(prev_meta.job_boundaries);
  SchedulePrediction pred;
  pred.prev_start = prev_meta.start_epoch;
  pred.next_start = next_start_epoch;
  const double shift = static_cast<double>(next_start_epoch - prev_meta.start_epoch);
  for (auto id : articles) {
    const auto& fit = detail::fit_for(prev_fits, layout.job_of(id), id);
    pred.predicted[id] = fit.at(id) + shift;
  }
  return pred;
}

/// Predicts every article captured in `prev_meta`.
inline SchedulePrediction predict_next(std::span<const JobFit> prev_fits, const SnapshotMeta& prev_meta,
                                       EpochSeconds next_start_epoch) {
  std::vector<ArticleId> ids;
  ids.reserve(prev_meta.captured_revision.size());
  for (const auto& [id, rev] : prev_meta.captured_revision) ids.push_back(id);
  return predict_next(prev_fits, prev_meta, next_start_epoch, ids);
}

struct ErrorDistribution {
  std::vector<std::pair<ArticleId, double>> errors;  // predicted - posthoc, seconds
  double bin_width = 300.0;
  std::map<std::int64_t, std::size_t> histogram;  // bin index -> count; bin k covers [k*w, (k+1)*w)
  double mean = 0.0;
  double median = 0.0;
};

inline ErrorDistribution prediction_error_distribution(const SchedulePrediction& pred,
                                                       std::span<const JobFit> posthoc_fits,
                                                       const SnapshotMeta& next_meta, double bin_width = 300.0) {
  if (!(bin_width > 0)) throw InputError("histogram bin width must be positive");
  ErrorDistribution dist;
  dist.bin_width = bin_width;
  double sum = 0;
  for (const auto& [id, t] : pred.predicted) {
    const auto& fit = detail::fit_for(posthoc_fits, next_meta.job_of(id), id);
    double err = t - fit.at(id);
    dist.errors.emplace_back(id, err);
    sum += err;
    ++dist.histogram[static_cast<std::int64_t>(std::floor(err / bin_width))];
  }
  if (!dist.errors.empty()) {
    dist.mean = sum / static_cast<double>(dist.errors.size());
    std::vector<double> v;
    v.reserve(dist.errors.size());
    for (const auto& e : dist.errors) v.push_back(e.second);
    std::sort(v.begin(), v.end());
    auto n = v.size();
    dist.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return dist;
}

// ---- job boundary detection ---------------------------------------------------

/// Detects crawl-job resets when boundaries are not published. Scanning in id
/// order, a new job starts at an article whose earliest excluded edit lies more
/// than `threshold_seconds` below the running maximum of included edits of the
/// current job: inside one job that maximum is a lower bound for the article's
/// crawl time, so such a drop means the crawl restarted.
inline std::vector<ArticleId> detect_job_boundaries(std::span<const EditRecord> edits,
                                                    std::span<const Membership> memberships,
                                                    EpochSeconds threshold_seconds = 3600) {
  auto bounds = detail::per_article_bounds(edits, memberships);
  std::vector<ArticleId> cuts;
  std::optional<EpochSeconds> ceiling;
  for (const auto& [id, b] : bounds) {
    if (ceiling && b.first_excluded && *b.first_excluded < *ceiling - threshold_seconds) {
      cuts.push_back(id);
      ceiling.reset();
    }
    if (b.last_included) ceiling = ceiling ? std::max(*ceiling, *b.last_included) : *b.last_included;
  }
  return cuts;
}

// ---- file formats ------------------------------------------------------------

inline constexpr std::size_t kMaxInMemorySort = 10'000'000;

/// JSON Lines, one `{"article","rev","epoch","comment"}` object per line.
/// Unsorted input is sorted in memory when small enough.
inline std::vector<EditRecord> read_edit_log_jsonl(std::istream& in) {
  std::vector<EditRecord> edits;
  std::string line;
  std::size_t lineno = 0;
  bool sorted = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      EditRecord e{j.at("article").get<ArticleId>(), j.at("rev").get<RevisionId>(),
                   j.at("epoch").get<EpochSeconds>(), j.value("comment", std::string())};
      if (!edits.empty() && !edit_order(edits.back(), e)) sorted = false;
      edits.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError("edit log line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (!sorted) {
    if (edits.size() >= kMaxInMemorySort) {
      throw InputError("edit log is not sorted by (article, rev) and too large to sort in memory; "
                       "sort it externally first");
    }
    std::sort(edits.begin(), edits.end(), edit_order);
  }
  for (std::size_t i = 1; i < edits.size(); ++i) {
    if (!edit_order(edits[i - 1], edits[i])) {
      throw InputError("duplicate revision " + std::to_string(edits[i].revision_id) + " for article " +
                       std::to_string(edits[i].article_id));
    }
  }
  return edits;
}

inline void write_edit_log_jsonl(std::ostream& out, std::span<const EditRecord> edits) {
  for (const auto& e : edits) {
    nlohmann::ordered_json j;
    j["article"] = e.article_id;
    j["rev"] = e.revision_id;
    j["epoch"] = e.edit_epoch;
    j["comment"] = e.comment;
    out << j.dump() << '\n';
  }
}

inline SnapshotMeta snapshot_meta_from_json(const nlohmann::json& j) {
  SnapshotMeta m;
  try {
    m.snapshot_id = j.at("snapshot_id").get<std::string>();
    m.start_epoch = j.at("start_epoch").get<EpochSeconds>();
    m.job_boundaries = j.at("boundaries").get<std::vector<ArticleId>>();
    for (const auto& [k, v] : j.at("captured").items()) {
      m.captured_revision[parse_int<ArticleId>(k, "captured article id")] = v.get<RevisionId>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("snapshot metadata: ") + ex.what());
  }
  validate(m);
  return m;
}

inline SnapshotMeta read_snapshot_meta_json(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("snapshot metadata: ") + ex.what());
  }
  return snapshot_meta_from_json(j);
}

inline nlohmann::ordered_json to_json(const SnapshotMeta& m) {
  nlohmann::ordered_json j;
  j["snapshot_id"] = m.snapshot_id;
  j["start_epoch"] = m.start_epoch;
  j["boundaries"] = m.job_boundaries;
  j["captured"] = nlohmann::ordered_json::object();
  for (const auto& [id, rev] : m.captured_revision) j["captured"][std::to_string(id)] = rev;
  return j;
}

inline std::string format_double(double v) {
  return nlohmann::json(v).dump();
}

inline void write_intervals_csv(std::ostream& out, const IntervalSet& set) {
  csv::write_row(out, {"article", "job", "low", "high", "high_open"});
  for (const auto& iv : set.intervals) {
    csv::write_row(out, {std::to_string(iv.article_id), std::to_string(iv.job_index), std::to_string(iv.low),
                         std::to_string(iv.high), iv.high_open ? "1" : "0"});
  }
}

inline IntervalSet read_intervals_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"article", "job", "low", "high", "high_open"});
  IntervalSet set;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 5) throw InputError("interval record " + std::to_string(reader.record_number()) + ": expected 5 fields");
    ArticleInterval iv{parse_int<ArticleId>(row[0], "article"), parse_int<EpochSeconds>(row[2], "low"),
                       parse_int<EpochSeconds>(row[3], "high"), parse_int<std::size_t>(row[1], "job"),
                       trim(row[4]) == "1"};
    set.open_ended = set.open_ended || iv.high_open;
    set.intervals.push_back(iv);
  }
  std::sort(set.intervals.begin(), set.intervals.end(),
            [](const ArticleInterval& a, const ArticleInterval& b) { return a.article_id < b.article_id; });
  return set;
}

inline void write_fits_csv(std::ostream& out, std::span<const JobFit> fits) {
  csv::write_row(out, {"job", "slope", "intercept", "mean_abs_bound_error", "n_articles"});
  for (const auto& f : fits) {
    csv::write_row(out, {std::to_string(f.job_index), format_double(f.slope), format_double(f.intercept),
                         format_double(f.mean_abs_bound_error), std::to_string(f.n_articles)});
  }
}

inline std::vector<JobFit> read_fits_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"job", "slope", "intercept", "mean_abs_bound_error", "n_articles"});
  std::vector<JobFit> fits;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 5) throw InputError("fit record " + std::to_string(reader.record_number()) + ": expected 5 fields");
    fits.push_back({parse_int<std::size_t>(row[0], "job"), parse_double(row[1], "slope"),
                    parse_double(row[2], "intercept"), parse_double(row[3], "mean_abs_bound_error"),
                    parse_int<std::size_t>(row[4], "n_articles")});
  }
  return fits;
}

inline void write_predictions_csv(std::ostream& out, const SchedulePrediction& pred) {
  csv::write_row(out, {"article", "predicted", "prev_start", "next_start"});
  for (const auto& [id, t] : pred.predicted) {
    csv::write_row(out, {std::to_string(id), format_double(t), std::to_string(pred.prev_start),
                         std::to_string(pred.next_start)});
  }
}

inline SchedulePrediction read_predictions_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"article", "predicted", "prev_start", "next_start"});
  SchedulePrediction pred;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 4) throw InputError("prediction record " + std::to_string(reader.record_number()) + ": expected 4 fields");
    pred.predicted[parse_int<ArticleId>(row[0], "article")] = parse_double(row[1], "predicted");
    pred.prev_start = parse_int<EpochSeconds>(row[2], "prev_start");
    pred.next_start = parse_int<EpochSeconds>(row[3], "next_start");
  }
  return pred;
}

inline void write_error_histogram_csv(std::ostream& out, const ErrorDistribution& dist) {
  csv::write_row(out, {"bin_start", "bin_end", "count"});
  for (const auto& [bin, count] : dist.histogram) {
    csv::write_row(out, {format_double(static_cast<double>(bin) * dist.bin_width),
                         format_double(static_cast<double>(bin + 1) * dist.bin_width), std::to_string(count)});
  }
}

}  // namespace poisonscope

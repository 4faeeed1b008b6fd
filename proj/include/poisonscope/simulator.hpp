#pragma once

// Seeded synthetic snapshot worlds. Parallel crawl jobs walk contiguous id
// ranges linearly; articles receive Poisson edit streams, some of which are
// reverted after a sampled delay. Ground-truth crawl times are kept so every
// analytic stage can be checked against them.
//
// All randomness comes from xoshiro256** seeded through splitmix64, with
// distributions sampled by inversion, so worlds are reproducible across
// platforms and standard libraries.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "poisonscope/attack_estimator.hpp"
#include "poisonscope/common.hpp"
#include "poisonscope/reversion_model.hpp"
#include "poisonscope/snapshot_timing.hpp"

namespace poisonscope::sim {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** 1.0 (Blackman & Vigna), state filled from splitmix64(seed).
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    for (auto& word : s_) word = splitmix64(seed);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi], by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next());
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % range);
  }

  /// Poisson by sequential inversion, split into chunks of mean <= 64.
  std::uint64_t poisson(double mean) {
    std::uint64_t total = 0;
    while (mean > 0) {
      const double m = std::min(mean, 64.0);
      mean -= m;
      const double u = uniform();
      double p = std::exp(-m), cdf = p;
      std::uint64_t k = 0;
      while (u >= cdf && k < 10'000) {
        ++k;
        p *= m / static_cast<double>(k);
        cdf += p;
      }
      total += k;
    }
    return total;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

/// Deterministic uniform [0, 1) keyed by (seed, key); order independent.
inline double keyed_uniform(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t state = seed ^ (key * 0xD1B54A32D192ED03ULL);
  splitmix64(state);
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

// ---- reversion delays -------------------------------------------------------

struct ExponentialDelay {
  double mean_seconds = 3600;
};

struct EmpiricalDelay {
  std::vector<std::int64_t> samples;  // sorted ascending
  std::string source;                 // file it was loaded from, if any
};

class DelayDistribution {
 public:
  DelayDistribution() = default;
  DelayDistribution(ExponentialDelay e) : dist_(e) {
    if (!(e.mean_seconds > 0)) throw InputError("exponential delay mean must be positive");
  }
  DelayDistribution(EmpiricalDelay e) {
    if (e.samples.empty()) throw InputError("empirical delay distribution has no samples");
    std::sort(e.samples.begin(), e.samples.end());
    if (e.samples.front() < 0) throw InputError("negative delay sample");
    dist_ = std::move(e);
  }

  /// Inverse CDF at u in [0, 1).
  double quantile(double u) const {
    if (auto* e = std::get_if<ExponentialDelay>(&dist_)) return -e->mean_seconds * std::log1p(-u);
    const auto& s = std::get<EmpiricalDelay>(dist_).samples;
    auto idx = std::min(s.size() - 1, static_cast<std::size_t>(u * static_cast<double>(s.size())));
    return static_cast<double>(s[idx]);
  }

  double evaluate(double t) const {
    if (t < 0) return 0.0;
    if (auto* e = std::get_if<ExponentialDelay>(&dist_)) return -std::expm1(-t / e->mean_seconds);
    const auto& s = std::get<EmpiricalDelay>(dist_).samples;
    auto n = std::upper_bound(s.begin(), s.end(), t, [](double v, std::int64_t d) { return v < static_cast<double>(d); }) - s.begin();
    return static_cast<double>(n) / static_cast<double>(s.size());
  }

  double mean() const {
    if (auto* e = std::get_if<ExponentialDelay>(&dist_)) return e->mean_seconds;
    const auto& s = std::get<EmpiricalDelay>(dist_).samples;
    double sum = 0;
    for (auto v : s) sum += static_cast<double>(v);
    return sum / static_cast<double>(s.size());
  }

  std::string describe() const {
    if (auto* e = std::get_if<ExponentialDelay>(&dist_)) return "exponential:" + format_double(e->mean_seconds);
    const auto& emp = std::get<EmpiricalDelay>(dist_);
    return "empirical:" + (emp.source.empty() ? std::string("<inline>") : emp.source);
  }

 private:
  std::variant<ExponentialDelay, EmpiricalDelay> dist_{ExponentialDelay{}};
};

// ---- configuration ----------------------------------------------------------

struct SimConfig {
  std::size_t n_articles = 5000;
  std::size_t n_jobs = 4;
  double crawl_rate = 0.02;  // articles per second per job
  double rate_drift = 0.0;   // relative speed change in the second snapshot
  double edit_rate = 10.0;   // mean edits per article per snapshot period
  double revert_probability = 0.2;
  DelayDistribution reversion_delay{ExponentialDelay{3600}};
  std::array<EpochSeconds, 2> snapshot_start_epochs{1'654'041'600, 1'655'683'200};  // 2022-06-01, 2022-06-20
  std::uint64_t seed = 1;

  EpochSeconds period() const { return snapshot_start_epochs[1] - snapshot_start_epochs[0]; }

  std::size_t largest_job() const { return (n_articles + n_jobs - 1) / n_jobs; }
};

inline void validate(const SimConfig& c) {
  if (c.n_jobs < 1) throw InputError("n_jobs must be >= 1");
  if (c.n_articles < c.n_jobs) throw InputError("n_articles must be >= n_jobs");
  if (!(c.crawl_rate > 0)) throw InputError("crawl_rate must be positive");
  if (!(c.rate_drift > -1)) throw InputError("rate_drift must exceed -1");
  if (!(c.edit_rate >= 0)) throw InputError("edit_rate must be nonnegative");
  if (!(c.revert_probability >= 0 && c.revert_probability <= 1)) throw InputError("revert_probability must be in [0,1]");
  if (c.snapshot_start_epochs[0] <= 0 || c.period() <= 0) throw InputError("snapshot starts must be positive and ascending");
  const double job = static_cast<double>(c.largest_job());
  const double slowest = c.crawl_rate * std::min(1.0, 1.0 + c.rate_drift);
  if (job / slowest >= static_cast<double>(c.period())) {
    throw InputError("a crawl job would not finish before the next snapshot starts");
  }
}

/// Flat `key = value` text; `#` starts a comment. Relative empirical delay
/// files resolve against `base_dir`.
inline SimConfig parse_sim_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  SimConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key=value");
    auto key = std::string(trim(t.substr(0, eq)));
    auto value = trim(t.substr(eq + 1));
    if (key == "n_articles") c.n_articles = parse_int<std::size_t>(value, key);
    else if (key == "n_jobs") c.n_jobs = parse_int<std::size_t>(value, key);
    else if (key == "crawl_rate") c.crawl_rate = parse_double(value, key);
    else if (key == "rate_drift") c.rate_drift = parse_double(value, key);
    else if (key == "edit_rate") c.edit_rate = parse_double(value, key);
    else if (key == "revert_probability") c.revert_probability = parse_double(value, key);
    else if (key == "snapshot_start_1") c.snapshot_start_epochs[0] = parse_int<EpochSeconds>(value, key);
    else if (key == "snapshot_start_2") c.snapshot_start_epochs[1] = parse_int<EpochSeconds>(value, key);
    else if (key == "seed") c.seed = parse_int<std::uint64_t>(value, key);
    else if (key == "reversion_delay") {
      auto colon = value.find(':');
      if (colon == std::string_view::npos) throw InputError("reversion_delay must be exponential:<mean> or empirical:<file>");
      auto kind = trim(value.substr(0, colon));
      auto arg = std::string(trim(value.substr(colon + 1)));
      if (kind == "exponential") {
        c.reversion_delay = ExponentialDelay{parse_double(arg, key)};
      } else if (kind == "empirical") {
        std::filesystem::path p(arg);
        if (p.is_relative()) p = base_dir / p;
        std::ifstream f(p);
        if (!f) throw InputError("cannot open delay file " + p.string());
        c.reversion_delay = EmpiricalDelay{read_durations(f), arg};
      } else {
        throw InputError("unknown reversion_delay kind '" + std::string(kind) + "'");
      }
    } else {
      throw InputError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

inline std::string to_config_text(const SimConfig& c) {
  std::ostringstream out;
  out << "n_articles = " << c.n_articles << '\n'
      << "n_jobs = " << c.n_jobs << '\n'
      << "crawl_rate = " << format_double(c.crawl_rate) << '\n'
      << "rate_drift = " << format_double(c.rate_drift) << '\n'
      << "edit_rate = " << format_double(c.edit_rate) << '\n'
      << "revert_probability = " << format_double(c.revert_probability) << '\n'
      << "reversion_delay = " << c.reversion_delay.describe() << '\n'
      << "snapshot_start_1 = " << c.snapshot_start_epochs[0] << '\n'
      << "snapshot_start_2 = " << c.snapshot_start_epochs[1] << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

// ---- world generation -------------------------------------------------------

struct SimWorld {
  SimConfig config;
  std::vector<EditRecord> edits;  // sorted by (article, rev)
  std::array<SnapshotMeta, 2> snapshots;
  /// true_times[s][id - 1]: ground-truth crawl time of article id in snapshot s.
  std::array<std::vector<double>, 2> true_times;
  /// Start of a hypothetical third snapshot; the second crawl ends before it.
  EpochSeconds horizon_epoch = 0;

  ArticleId first_id() const { return 1; }
  ArticleId last_id() const { return config.n_articles; }
  double true_time(std::size_t snapshot, ArticleId id) const { return true_times[snapshot].at(id - 1); }
};

inline constexpr std::string_view kBenignComment = "copyedit";

/// Articles 1..n are split into n_jobs contiguous, near-equal ranges.
inline std::vector<ArticleId> sim_job_boundaries(const SimConfig& c) {
  std::vector<ArticleId> cuts;
  for (std::size_t j = 1; j < c.n_jobs; ++j) cuts.push_back(1 + j * c.n_articles / c.n_jobs);
  return cuts;
}

inline SimWorld generate_world(const SimConfig& config) {
  validate(config);
  SimWorld w;
  w.config = config;
  const auto S1 = config.snapshot_start_epochs[0];
  const auto S2 = config.snapshot_start_epochs[1];
  const auto P = config.period();
  w.horizon_epoch = S2 + P;

  const auto cuts = sim_job_boundaries(config);
  for (std::size_t s = 0; s < 2; ++s) {
    w.snapshots[s].snapshot_id = "sim-" + std::to_string(s + 1);
    w.snapshots[s].start_epoch = config.snapshot_start_epochs[s];
    w.snapshots[s].job_boundaries = cuts;
    w.true_times[s].resize(config.n_articles);
  }
  const double rate2 = config.crawl_rate * (1.0 + config.rate_drift);
  {
    std::size_t job_start = 1;
    for (std::size_t j = 0; j < config.n_jobs; ++j) {
      const std::size_t job_end = j + 1 < config.n_jobs ? cuts[j] : config.n_articles + 1;
      for (std::size_t id = job_start; id < job_end; ++id) {
        const double k = static_cast<double>(id - job_start) + 0.5;
        w.true_times[0][id - 1] = static_cast<double>(S1) + k / config.crawl_rate;
        w.true_times[1][id - 1] = static_cast<double>(S2) + k / rate2;
      }
      job_start = job_end;
    }
  }

  struct Event {
    EpochSeconds epoch;
    ArticleId article;
    std::uint32_t seq;
    bool revert;
  };
  std::vector<Event> events;
  Xoshiro256 rng(config.seed);
  const EpochSeconds window_lo = S1 - P, window_hi = S2 + P - 1;
  for (ArticleId id = 1; id <= config.n_articles; ++id) {
    const auto count = rng.poisson(config.edit_rate * 3.0);
    std::uint32_t seq = 0;
    for (std::uint64_t e = 0; e < count; ++e) {
      const auto t = rng.uniform_int(window_lo, window_hi);
      events.push_back({t, id, seq++, false});
      if (rng.uniform() < config.revert_probability) {
        const auto delay = static_cast<EpochSeconds>(std::ceil(config.reversion_delay.quantile(rng.uniform())));
        events.push_back({t + delay, id, seq++, true});
      }
    }
  }
  // Revision ids follow global time order, as on a real wiki.
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.epoch != b.epoch) return a.epoch < b.epoch;
    if (a.article != b.article) return a.article < b.article;
    return a.seq < b.seq;
  });
  w.edits.reserve(events.size());
  RevisionId rev = 0;
  for (const auto& ev : events) {
    ++rev;
    std::string comment = ev.revert ? (rev % 2 ? "Reverted edits by 192.0.2.7 to last revision"
                                               : "Undid revision " + std::to_string(rev - 1) + " by 192.0.2.7")
                                    : std::string(kBenignComment);
    w.edits.push_back({ev.article, rev, ev.epoch, std::move(comment)});
  }
  std::sort(w.edits.begin(), w.edits.end(), edit_order);

  for (const auto& e : w.edits) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (static_cast<double>(e.edit_epoch) <= w.true_time(s, e.article_id)) {
        auto& cap = w.snapshots[s].captured_revision[e.article_id];
        cap = std::max(cap, e.revision_id);
      }
    }
  }
  return w;
}

// ---- attacks ---------------------------------------------------------------

struct AttackRecord {
  ArticleId article_id = 0;
  double attacked_epoch = 0;
  std::optional<double> reverted_epoch;
  bool captured = false;
};

struct SimOutcome {
  double success = 0;
  std::vector<AttackRecord> articles;
};

struct AttackOptions {
  /// Snapshot finalisation is delayed by this long; reversions landing
  /// within it are applied (time-gated snapshots).
  double hold_seconds = 0;
  std::uint64_t delay_seed = 0;
};

/// Places one malicious edit per predicted article at predicted + a. It is
/// captured iff it lands no later than the article's true crawl time and its
/// sampled reversion lands after the crawl (plus any hold). Delays are keyed
/// by (seed, article), so sweeping `a` reuses the same draws.
inline SimOutcome run_attack(std::span<const double> true_times, const SchedulePrediction& predictions, double a,
                             const DelayDistribution& delays, const AttackOptions& options = {}) {
  SimOutcome out;
  out.articles.reserve(predictions.predicted.size());
  std::size_t captured = 0;
  for (const auto& [id, predicted] : predictions.predicted) {
    if (id < 1 || id > true_times.size()) throw InputError("prediction for unknown article " + std::to_string(id));
    const double truth = true_times[id - 1];
    AttackRecord r;
    r.article_id = id;
    r.attacked_epoch = predicted + a;
    const double delay = delays.quantile(keyed_uniform(options.delay_seed, id));
    if (std::isfinite(delay)) r.reverted_epoch = r.attacked_epoch + delay;
    r.captured = r.attacked_epoch <= truth && (!r.reverted_epoch || *r.reverted_epoch > truth + options.hold_seconds);
    captured += r.captured;
    out.articles.push_back(r);
  }
  out.success = out.articles.empty() ? 0.0 : static_cast<double>(captured) / static_cast<double>(out.articles.size());
  return out;
}

inline SimOutcome run_attack(const SimWorld& world, const SchedulePrediction& predictions, double a,
                             const DelayDistribution& delays, const AttackOptions& options = {}) {
  return run_attack(world.true_times[1], predictions, a, delays, options);
}

inline std::uint64_t attack_seed(const SimConfig& c) { return c.seed ^ 0xA5A5'5A5A'C3C3'3C3CULL; }

// ---- dumps ----------------------------------------------------------------------

inline void write_truth_csv(std::ostream& out, const SimWorld& w) {
  csv::write_row(out, {"article", "job", "true_1", "true_2"});
  for (ArticleId id = w.first_id(); id <= w.last_id(); ++id) {
    csv::write_row(out, {std::to_string(id), std::to_string(w.snapshots[0].job_of(id)),
                         format_double(w.true_time(0, id)), format_double(w.true_time(1, id))});
  }
}

// ---- end-to-end oracle ---------------------------------------------------------

struct OracleOptions {
  double a_min = -21600, a_max = 21600, a_step = 60;
  FitOptions fit;
  std::size_t workers = 1;
};

struct StagedWorld {
  SimWorld world;
  std::array<IntervalSet, 2> intervals;
  std::array<std::vector<JobFit>, 2> fits;
  SchedulePrediction prediction;  // snapshot 2, from snapshot 1 fits
  ReversionDurations durations;
};

/// generate -> classify -> intervals -> fits -> prediction -> durations.
inline StagedWorld stage_world(const SimConfig& config, const FitOptions& fit = {}) {
  StagedWorld st{generate_world(config), {}, {}, {}, {}};
  const auto& w = st.world;
  const std::array<EpochSeconds, 2> upper = {w.config.snapshot_start_epochs[1], w.horizon_epoch};
  for (std::size_t s = 0; s < 2; ++s) {
    auto membership = classify_membership(w.edits, w.snapshots[s]);
    st.intervals[s] = infer_intervals(w.edits, membership, w.snapshots[s], upper[s]);
    st.fits[s] = fit_jobs(st.intervals[s], fit);
  }
  std::vector<ArticleId> attacked;
  for (const auto& [id, rev] : w.snapshots[1].captured_revision) attacked.push_back(id);
  st.prediction = predict_next(st.fits[0], w.snapshots[0], w.snapshots[1].start_epoch, attacked);
  st.durations = reversion_durations(w.edits, RevertMarkerSet::english_default());
  return st;
}

/// Fraction of articles (both snapshots) whose true crawl time lies in the
/// inferred interval.
inline double containment_rate(const StagedWorld& st, std::size_t* checked = nullptr) {
  std::size_t in = 0, total = 0;
  for (std::size_t s = 0; s < 2; ++s) {
    for (const auto& iv : st.intervals[s].intervals) {
      const double t = st.world.true_time(s, iv.article_id);
      ++total;
      in += static_cast<double>(iv.low) <= t && t <= static_cast<double>(iv.high);
    }
  }
  if (checked) *checked = total;
  return total == 0 ? 1.0 : static_cast<double>(in) / static_cast<double>(total);
}

struct OracleReport {
  std::uint64_t seed = 0;
  std::size_t attacked_articles = 0;
  double containment = 1.0;
  std::size_t intervals_checked = 0;
  double max_slope_rel_error = 0;  // snapshot 1 fits vs true 1/crawl_rate
  double mean_abs_bound_error = 0;
  double mean_prediction_error = 0;  // predicted - posthoc fit, seconds
  SweepResult analytic;
  std::vector<double> empirical;  // aligned with analytic.curve
  double empirical_at_best = 0;
  double max_excess = 0;  // max_a analytic(a) - empirical(a)
};

inline OracleReport oracle_pipeline(const SimConfig& config, const OracleOptions& options = {}) {
  auto st = stage_world(config, options.fit);
  const auto& w = st.world;
  OracleReport rep;
  rep.seed = config.seed;
  rep.containment = containment_rate(st, &rep.intervals_checked);

  const double true_slope = 1.0 / config.crawl_rate;
  double bound_err = 0;
  for (const auto& f : st.fits[0]) {
    rep.max_slope_rel_error = std::max(rep.max_slope_rel_error, std::abs(f.slope - true_slope) / true_slope);
    bound_err += f.mean_abs_bound_error;
  }
  rep.mean_abs_bound_error = st.fits[0].empty() ? 0 : bound_err / static_cast<double>(st.fits[0].size());
  rep.mean_prediction_error = prediction_error_distribution(st.prediction, st.fits[1], w.snapshots[1]).mean;

  auto attack = join_attack_input(st.prediction, st.intervals[1]);
  rep.attacked_articles = attack.size();
  EmpiricalCdf cdf(st.durations.durations);
  rep.analytic = sweep(attack, cdf, options.a_min, options.a_max, options.a_step, options.workers);

  AttackOptions ao;
  ao.delay_seed = attack_seed(config);
  rep.empirical.resize(rep.analytic.curve.size());
  parallel_for(rep.analytic.curve.size(), options.workers, [&](std::size_t k) {
    rep.empirical[k] = run_attack(w, st.prediction, rep.analytic.curve[k].a, config.reversion_delay, ao).success;
  });
  rep.max_excess = -1.0;
  for (std::size_t k = 0; k < rep.empirical.size(); ++k) {
    rep.max_excess = std::max(rep.max_excess, rep.analytic.curve[k].success - rep.empirical[k]);
    if (rep.analytic.curve[k].a == rep.analytic.best_a) rep.empirical_at_best = rep.empirical[k];
  }
  return rep;
}

/// Point-bound variant: low = high = true crawl time for every article, CDF
/// from the world's edit log. Returns max_a |analytic(a) - empirical(a)|.
inline double degenerate_bound_gap(const StagedWorld& st, const OracleOptions& options = {}) {
  const auto& w = st.world;
  std::vector<AttackArticle> attack;
  for (const auto& [id, predicted] : st.prediction.predicted) {
    const double t = w.true_time(1, id);
    attack.push_back({id, predicted, t, t});
  }
  EmpiricalCdf cdf(st.durations.durations);
  auto analytic = sweep(attack, cdf, options.a_min, options.a_max, options.a_step, options.workers);
  AttackOptions ao;
  ao.delay_seed = attack_seed(w.config);
  std::vector<double> gaps(analytic.curve.size());
  parallel_for(analytic.curve.size(), options.workers, [&](std::size_t k) {
    const auto emp = run_attack(w, st.prediction, analytic.curve[k].a, w.config.reversion_delay, ao).success;
    gaps[k] = std::abs(analytic.curve[k].success - emp);
  });
  return *std::max_element(gaps.begin(), gaps.end());
}

}  // namespace poisonscope::sim

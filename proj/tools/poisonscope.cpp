// poisonscope command-line front end.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "poisonscope/poisonscope.hpp"

namespace fs = std::filesystem;
using namespace poisonscope;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string manifest_path;
};

/// Tracks inputs/outputs of one run for the manifest.
class Run {
 public:
  explicit Run(const Globals& g) : g_(g) {}

  std::istringstream input(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open input " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    auto bytes = buf.str();
    inputs_[path] = compute_content_hash(bytes);
    return std::istringstream(bytes);
  }

  /// Writes `body` to `path`, or to stdout when path is empty.
  void output(const std::string& path, const std::string& body) {
    if (path.empty()) {
      std::cout << body;
      return;
    }
    if (fs::exists(path) && !g_.force) throw InputError("refusing to overwrite " + path + " (use --force)");
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << body;
    outputs_.push_back(path);
  }

  template <typename Fn>
  void output_with(const std::string& path, Fn&& fn) {
    std::ostringstream out;
    fn(out);
    output(path, out.str());
  }

  json manifest(const CLI::App& sub, double seconds) const {
    json j;
    j["subcommand"] = sub.get_name();
    json params = json::object();
    for (const auto* opt : sub.get_options()) {
      if (opt->get_name() == "--help" || opt->count() == 0) continue;
      auto res = opt->results();
      params[opt->get_name()] = res.size() == 1 ? json(res.front()) : json(res);
    }
    params["--jobs"] = g_.jobs;
    if (g_.seed) params["--seed"] = *g_.seed;
    j["parameters"] = params;
    j["inputs"] = json::object();
    for (const auto& [p, h] : inputs_) j["inputs"][p] = h;
    j["outputs"] = outputs_;
    j["wall_seconds"] = seconds;
    return j;
  }

  const Globals& globals() const { return g_; }

 private:
  const Globals& g_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

std::string slurp_json(const json& j) { return j.dump(2) + "\n"; }

DatasetIndex load_index(Run& run, const std::string& path, const std::string& name, EpochSeconds release) {
  auto in = run.input(path);
  return read_index_csv(in, name.empty() ? fs::path(path).stem().string() : name, release);
}

std::optional<fs::path> find_blob(const fs::path& dir, std::uint64_t ordinal) {
  const auto stem = std::to_string(ordinal);
  if (fs::is_regular_file(dir / stem)) return dir / stem;
  std::vector<fs::path> hits;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().stem() == stem) hits.push_back(e.path());
  }
  if (hits.empty()) return std::nullopt;
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

std::vector<std::int64_t> load_durations(Run& run, const std::string& path) {
  auto in = run.input(path);
  return read_durations(in);
}

sim::SimConfig load_config(Run& run, const std::string& path) {
  auto in = run.input(path);
  auto c = sim::parse_sim_config(in, fs::path(path).parent_path());
  if (run.globals().seed) c.seed = *run.globals().seed;
  sim::validate(c);
  return c;
}

std::set<std::string> load_domain_list(Run& run, const std::string& path) {
  auto in = run.input(path);
  return read_domain_list(in);
}

std::vector<AccessRecord> load_log(Run& run, const std::string& path) {
  auto in = run.input(path);
  auto log = parse_log(in);
  if (log.malformed) std::cerr << "skipped " << log.malformed << " malformed log lines\n";
  return std::move(log.records);
}

SuffixRules load_rules(Run& run, const std::string& path) {
  if (path.empty()) return builtin_suffix_rules();
  auto in = run.input(path);
  return SuffixRules::load(in);
}

using Action = std::function<void(Run&)>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measure split-view and frontrunning poisoning exposure of web-scale datasets"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--jobs", g.jobs, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_flag("--force", g.force, "Overwrite existing output files");
  app.add_option("--manifest", g.manifest_path, "Write the run manifest here instead of stderr");

  std::map<CLI::App*, Action> actions;
  auto add = [&](const std::string& name, const std::string& help) { return app.add_subcommand(name, help); };

  // ---- core_index ----
  {
    auto* s = add("verify", "Hash-check downloaded content against an index; prints IntegrityReport JSON");
    auto p = std::make_shared<std::tuple<std::string, std::string, std::string, std::string, EpochSeconds>>();
    s->add_option("--index", std::get<0>(*p), "Index CSV: ordinal,url,caption,sha256")->required();
    s->add_option("--content-dir", std::get<1>(*p), "Blobs named <ordinal> or <ordinal>.<ext>")->required();
    s->add_option("--outcomes", std::get<2>(*p), "Also write ordinal,outcome CSV");
    s->add_option("--out", std::get<3>(*p), "Report JSON (default stdout)");
    std::get<4>(*p) = 1;
    s->add_option("--release-epoch", std::get<4>(*p), "Index publication time");
    actions[s] = [p](Run& run) {
      auto& [index_path, dir, outcomes_path, out, release] = *p;
      auto index = load_index(run, index_path, "", release);
      if (!fs::is_directory(dir)) throw InputError("content dir does not exist: " + dir);
      std::vector<VerificationOutcome> outcomes;
      for (const auto& e : index.entries()) {
        auto blob = find_blob(dir, e.ordinal);
        if (!blob) {
          outcomes.push_back(verify_entry(e, std::nullopt, false));
          continue;
        }
        std::ifstream f(*blob, std::ios::binary);
        std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        auto bytes = std::as_bytes(std::span<const char>(raw));
        outcomes.push_back(verify_entry(e, bytes, probe_image_magic(bytes)));
      }
      if (!outcomes_path.empty()) run.output_with(outcomes_path, [&](auto& o) { write_outcomes_csv(o, index, outcomes); });
      run.output(out, slurp_json(to_json(integrity_report(index, outcomes))));
    };
  }
  {
    auto* s = add("integrity-report", "Aggregate verification outcomes");
    auto p = std::make_shared<std::tuple<std::string, std::string, std::string, std::string>>();
    s->add_option("--index", std::get<0>(*p), "Index CSV")->required();
    s->add_option("--outcomes", std::get<1>(*p), "ordinal,outcome CSV")->required();
    std::get<2>(*p) = "json";
    s->add_option("--format", std::get<2>(*p), "json or csv")->check(CLI::IsMember({"json", "csv"}));
    s->add_option("--out", std::get<3>(*p), "Output file (default stdout)");
    actions[s] = [p](Run& run) {
      auto& [index_path, outcomes_path, format, out] = *p;
      auto index = load_index(run, index_path, "", 1);
      auto in = run.input(outcomes_path);
      auto report = integrity_report(index, read_outcomes_csv(in, index));
      if (format == "json") run.output(out, slurp_json(to_json(report)));
      else run.output_with(out, [&](auto& o) { write_report_csv(o, report); });
    };
  }

  // ---- domain_audit ----
  {
    auto* s = add("audit-domains", "Classify domains from resolver probes; writes domain,status[,image_count]");
    struct P {
      std::string probes, index, suffixes, out;
      ExpirationPolicy policy;
    };
    auto p = std::make_shared<P>();
    s->add_option("--probes", p->probes, "CSV: domain,vantage,epoch,result")->required();
    s->add_option("--index", p->index, "Index CSV; adds per-domain image counts");
    s->add_option("--suffix-list", p->suffixes, "Public-suffix rules file (default: built-in sample)");
    s->add_option("--min-probes", p->policy.min_probes, "NXDOMAIN probes required");
    s->add_option("--min-vantages", p->policy.min_vantages, "Distinct vantage points required");
    s->add_option("--min-days", p->policy.min_distinct_days, "Distinct UTC days required");
    s->add_option("--out", p->out, "Output CSV (default stdout)");
    actions[s] = [p](Run& run) {
      auto in = run.input(p->probes);
      auto status = audit_domains(read_probes_csv(in), p->policy);
      std::map<std::string, std::uint64_t> counts;
      if (!p->index.empty()) counts = count_images_by_domain(load_index(run, p->index, "", 1), load_rules(run, p->suffixes));
      run.output_with(p->out, [&](auto& o) {
        if (p->index.empty()) csv::write_row(o, {"domain", "status"});
        else csv::write_row(o, {"domain", "status", "image_count"});
        for (const auto& [d, st] : status) {
          if (p->index.empty()) csv::write_row(o, {d, std::string(to_string(st))});
          else csv::write_row(o, {d, std::string(to_string(st)), std::to_string(counts.count(d) ? counts.at(d) : 0)});
        }
      });
    };
  }
  {
    auto* s = add("plan-purchase", "Greedy images-per-dollar domain purchase plan under a budget");
    struct P {
      std::string domains, out;
      std::uint64_t index_size = 0;
      std::int64_t budget = 0;
    };
    auto p = std::make_shared<P>();
    s->add_option("--domains", p->domains, "CSV: domain,image_count,status,price_cents")->required();
    s->add_option("--index-size", p->index_size, "Total index entries")->required();
    s->add_option("--budget-cents", p->budget, "Budget in cents")->required();
    s->add_option("--out", p->out, "Plan CSV (default stdout)");
    actions[s] = [p](Run& run) {
      auto in = run.input(p->domains);
      auto plan = plan_purchase(read_domain_records_csv(in), p->index_size, p->budget);
      run.output_with(p->out, [&](auto& o) { write_plan_csv(o, plan); });
      std::cerr << "cost_cents=" << plan.total_cost_cents << " images=" << plan.controlled_images
                << " fraction=" << format_double(plan.controlled_fraction) << '\n';
    };
  }
  {
    auto* s = add("cost-curve", "Controlled fraction as a function of budget");
    struct P {
      std::string domains, out;
      std::uint64_t index_size = 0;
      std::vector<std::int64_t> budgets;
    };
    auto p = std::make_shared<P>();
    s->add_option("--domains", p->domains, "CSV: domain,image_count,status,price_cents")->required();
    s->add_option("--index-size", p->index_size, "Total index entries")->required();
    s->add_option("--budgets", p->budgets, "Ascending budgets in cents")->required()->delimiter(',');
    s->add_option("--out", p->out, "CSV budget_cents,fraction (default stdout)");
    actions[s] = [p](Run& run) {
      auto in = run.input(p->domains);
      auto curve = cost_curve(read_domain_records_csv(in), p->index_size, p->budgets);
      run.output_with(p->out, [&](auto& o) { write_curve_csv(o, curve); });
    };
  }
  {
    auto* s = add("signature-scan", "Flag domains serving modified content that changed hands after release");
    struct P {
      std::string index, outcomes, whois, suffixes, out;
      EpochSeconds release = 0;
    };
    auto p = std::make_shared<P>();
    s->add_option("--index", p->index, "Index CSV")->required();
    s->add_option("--outcomes", p->outcomes, "ordinal,outcome CSV")->required();
    s->add_option("--whois", p->whois, "CSV: domain,purchase_epoch (empty = unknown)")->required();
    s->add_option("--release-epoch", p->release, "Index publication time")->required();
    s->add_option("--suffix-list", p->suffixes, "Public-suffix rules file");
    s->add_option("--out", p->out, "JSON (default stdout)");
    actions[s] = [p](Run& run) {
      auto index = load_index(run, p->index, "", p->release);
      auto oin = run.input(p->outcomes);
      auto outcomes = read_outcomes_csv(oin, index);
      auto win = run.input(p->whois);
      auto flagged = attack_signature_scan(index, outcomes, read_whois_csv(win), load_rules(run, p->suffixes));
      run.output(p->out, slurp_json(to_json(std::span<const FlaggedDomain>(flagged))));
    };
  }
  {
    auto* s = add("amplify", "Poison fraction upstream and in curated subsets");
    struct P {
      std::uint64_t poison = 0, upstream = 0;
      std::vector<std::string> subsets;
      std::string out;
    };
    auto p = std::make_shared<P>();
    s->add_option("--poison-bytes", p->poison, "Injected bytes")->required();
    s->add_option("--upstream-bytes", p->upstream, "Upstream corpus bytes")->required();
    s->add_option("--subset", p->subsets, "name=bytes, repeatable");
    s->add_option("--out", p->out, "JSON (default stdout)");
    actions[s] = [p](Run& run) {
      std::map<std::string, std::uint64_t> subsets;
      for (const auto& spec : p->subsets) {
        auto eq = spec.find('=');
        if (eq == std::string::npos) throw InputError("subset must be name=bytes: " + spec);
        subsets[spec.substr(0, eq)] = parse_int<std::uint64_t>(spec.substr(eq + 1), "subset bytes");
      }
      run.output(p->out, slurp_json(to_json(amplification(p->poison, p->upstream, subsets))));
    };
  }

  // ---- snapshot_timing ----
  {
    auto* s = add("infer-schedule", "Crawl-time intervals and per-job linear fits for one snapshot");
    struct P {
      std::string edits, snapshot, intervals_out, fits_out;
      std::optional<EpochSeconds> next_start;
      bool detect = false;
      EpochSeconds threshold = 3600;
      double weight = 0.5;
    };
    auto p = std::make_shared<P>();
    s->add_option("--edits", p->edits, "Edit log JSONL")->required();
    s->add_option("--snapshot", p->snapshot, "Snapshot metadata JSON")->required();
    s->add_option("--next-start", p->next_start, "Start of the following snapshot (upper seed)");
    s->add_flag("--detect-jobs", p->detect, "Infer job boundaries instead of using the metadata");
    s->add_option("--jump-threshold", p->threshold, "Seconds of backwards jump that starts a new job");
    s->add_option("--open-weight", p->weight, "Regression weight of one-sided intervals");
    s->add_option("--intervals-out", p->intervals_out, "CSV article,job,low,high,high_open")->required();
    s->add_option("--fits-out", p->fits_out, "CSV job,slope,intercept,mean_abs_bound_error,n_articles")->required();
    actions[s] = [p](Run& run) {
      auto ein = run.input(p->edits);
      auto edits = read_edit_log_jsonl(ein);
      auto sin = run.input(p->snapshot);
      auto meta = read_snapshot_meta_json(sin);
      auto membership = classify_membership(edits, meta);
      if (p->detect) meta.job_boundaries = detect_job_boundaries(edits, membership, p->threshold);
      auto set = infer_intervals(edits, membership, meta, p->next_start);
      auto fits = fit_jobs(set, FitOptions{p->weight});
      run.output_with(p->intervals_out, [&](auto& o) { write_intervals_csv(o, set); });
      run.output_with(p->fits_out, [&](auto& o) { write_fits_csv(o, fits); });
      if (set.open_ended) std::cerr << "warning: no next snapshot start given; final upper bounds are open\n";
    };
  }
  {
    auto* s = add("predict", "Predict next-snapshot crawl times from previous fits");
    struct P {
      std::string fits, prev, intervals, attack_out, out;
      EpochSeconds next_start = 0;
    };
    auto p = std::make_shared<P>();
    s->add_option("--fits", p->fits, "Fits CSV of the previous snapshot")->required();
    s->add_option("--prev-snapshot", p->prev, "Previous snapshot metadata JSON")->required();
    s->add_option("--next-start", p->next_start, "Next snapshot start epoch")->required();
    s->add_option("--out", p->out, "CSV article,predicted,prev_start,next_start (default stdout)");
    s->add_option("--intervals", p->intervals, "Post-hoc intervals of the predicted snapshot");
    s->add_option("--attack-out", p->attack_out, "Joined CSV article,predicted,low,high")->needs(s->get_option("--intervals"));
    actions[s] = [p](Run& run) {
      auto fin = run.input(p->fits);
      auto fits = read_fits_csv(fin);
      auto sin = run.input(p->prev);
      auto meta = read_snapshot_meta_json(sin);
      auto pred = predict_next(fits, meta, p->next_start);
      run.output_with(p->out, [&](auto& o) { write_predictions_csv(o, pred); });
      if (!p->attack_out.empty()) {
        auto iin = run.input(p->intervals);
        auto joined = join_attack_input(pred, read_intervals_csv(iin));
        run.output_with(p->attack_out, [&](auto& o) { write_attack_csv(o, joined); });
      }
    };
  }
  {
    auto* s = add("prediction-errors", "Histogram of predicted minus post-hoc crawl times");
    struct P {
      std::string predictions, fits, snapshot, out;
      double bin = 300;
    };
    auto p = std::make_shared<P>();
    s->add_option("--predictions", p->predictions, "Predictions CSV")->required();
    s->add_option("--posthoc-fits", p->fits, "Fits CSV of the predicted snapshot")->required();
    s->add_option("--snapshot", p->snapshot, "Metadata JSON of the predicted snapshot")->required();
    s->add_option("--bin-width", p->bin, "Seconds per bin");
    s->add_option("--out", p->out, "CSV bin_start,bin_end,count (default stdout)");
    actions[s] = [p](Run& run) {
      auto pin = run.input(p->predictions);
      auto fin = run.input(p->fits);
      auto sin = run.input(p->snapshot);
      auto dist = prediction_error_distribution(read_predictions_csv(pin), read_fits_csv(fin), read_snapshot_meta_json(sin), p->bin);
      run.output_with(p->out, [&](auto& o) { write_error_histogram_csv(o, dist); });
      std::cerr << "mean=" << format_double(dist.mean) << " median=" << format_double(dist.median)
                << " n=" << dist.errors.size() << '\n';
    };
  }

  // ---- reversion_model ----
  {
    auto* s = add("revcdf", "Reversion delays from an edit log, and the CDF at chosen points");
    struct P {
      std::string edits, durations, out, lang = "en";
      std::vector<std::string> markers;
      std::vector<double> at;
    };
    auto p = std::make_shared<P>();
    auto* e = s->add_option("--edits", p->edits, "Edit log JSONL");
    auto* d = s->add_option("--durations", p->durations, "Existing durations file (one integer per line)");
    e->excludes(d);
    s->add_option("--markers", p->markers, "Marker files, merged with each other (default: built-in English)");
    s->add_option("--lang", p->lang, "Language code of the marker set");
    s->add_option("--out", p->out, "Write durations here");
    s->add_option("--at", p->at, "Print cdf(t) and 1-cdf(t) for each t")->delimiter(',');
    actions[s] = [p](Run& run) {
      std::vector<std::int64_t> durations;
      if (!p->durations.empty()) {
        durations = load_durations(run, p->durations);
      } else if (!p->edits.empty()) {
        auto markers = RevertMarkerSet::english_default();
        for (std::size_t i = 0; i < p->markers.size(); ++i) {
          auto in = run.input(p->markers[i]);
          auto set = RevertMarkerSet::load(in, p->lang);
          markers = i == 0 ? set : markers.merged_with(set);
        }
        auto in = run.input(p->edits);
        auto r = reversion_durations(read_edit_log_jsonl(in), markers);
        durations = r.durations;
        std::cerr << "reverts=" << r.reverts << " without_predecessor=" << r.without_predecessor
                  << " negative_dropped=" << r.negative_dropped << '\n';
      } else {
        throw InputError("one of --edits or --durations is required");
      }
      if (!p->out.empty()) run.output_with(p->out, [&](auto& o) { write_durations(o, durations); });
      EmpiricalCdf cdf(durations);
      std::ostringstream o;
      csv::write_row(o, {"t", "cdf", "survival"});
      for (double t : p->at) csv::write_row(o, {format_double(t), format_double(cdf.evaluate(t)), format_double(cdf.survival(t))});
      if (!p->at.empty()) std::cout << o.str();
    };
  }

  // ---- attack_estimator ----
  {
    auto* s = add("estimate-attack", "Success fraction A(a) at one adjustment");
    struct P {
      std::string input, cdf, terms_out;
      double a = 0;
    };
    auto p = std::make_shared<P>();
    s->add_option("--input", p->input, "CSV article,predicted,low,high")->required();
    s->add_option("--cdf", p->cdf, "Reversion durations file")->required();
    s->add_option("--a", p->a, "Adjustment in seconds (signed)")->required()->allow_extra_args(false);
    s->add_option("--terms-out", p->terms_out, "CSV article,term");
    actions[s] = [p](Run& run) {
      auto in = run.input(p->input);
      auto articles = read_attack_csv(in);
      EmpiricalCdf cdf(load_durations(run, p->cdf));
      auto est = estimate(articles, p->a, cdf, !p->terms_out.empty());
      std::cout << "a=" << format_double(est.a) << " success=" << format_double(est.success_fraction) << '\n';
      if (!p->terms_out.empty()) {
        run.output_with(p->terms_out, [&](auto& o) {
          csv::write_row(o, {"article", "term"});
          for (std::size_t i = 0; i < articles.size(); ++i) {
            csv::write_row(o, {std::to_string(articles[i].article_id), format_double((*est.per_article_terms)[i])});
          }
        });
      }
    };
  }
  {
    auto* s = add("sweep", "A(a) over a grid of adjustments; prints the best a");
    struct P {
      std::string input, cdf, out;
      double a_min = -21600, a_max = 21600, a_step = 60;
    };
    auto p = std::make_shared<P>();
    s->add_option("--input", p->input, "CSV article,predicted,low,high")->required();
    s->add_option("--cdf", p->cdf, "Reversion durations file")->required();
    s->add_option("--a-min", p->a_min, "Grid start (s)");
    s->add_option("--a-max", p->a_max, "Grid end (s)");
    s->add_option("--a-step", p->a_step, "Grid step (s)");
    s->add_option("--out", p->out, "CSV a,success (default stdout)");
    actions[s] = [p](Run& run) {
      auto in = run.input(p->input);
      auto articles = read_attack_csv(in);
      EmpiricalCdf cdf(load_durations(run, p->cdf));
      auto res = sweep(articles, cdf, p->a_min, p->a_max, p->a_step, run.globals().jobs);
      run.output_with(p->out, [&](auto& o) { write_sweep_csv(o, res.curve); });
      (p->out.empty() ? std::cerr : std::cout) << "best_a=" << format_double(res.best_a)
                                               << " success=" << format_double(res.best_success) << '\n';
    };
  }

  // ---- defense_eval ----
  {
    auto* s = add("defense-eval", "Closed-form or simulated effect of a defense; prints JSON");
    struct P {
      std::string kind, cdf, index, outcomes, sim_config, out;
      double delta = 0, window = 0, baseline = 0, hold = 0, a = 0;
    };
    auto p = std::make_shared<P>();
    s->add_option("--defense", p->kind, "randomized-order, time-gate or hash")
        ->required()
        ->check(CLI::IsMember({"randomized-order", "time-gate", "hash"}));
    s->add_option("--delta", p->delta, "randomized-order: reversion delay (s)");
    s->add_option("--window", p->window, "randomized-order: crawl window (s)");
    s->add_option("--cdf", p->cdf, "time-gate: reversion durations file");
    s->add_option("--baseline", p->baseline, "time-gate: window without the hold (s)");
    s->add_option("--hold", p->hold, "time-gate: hold (s)");
    s->add_option("--index", p->index, "hash: index CSV");
    s->add_option("--outcomes", p->outcomes, "hash: verification outcomes CSV");
    s->add_option("--simulate", p->sim_config, "Also rerun the attack in a simulated world from this config");
    s->add_option("--a", p->a, "Adjustment for the simulated attack");
    s->add_option("--out", p->out, "JSON (default stdout)");
    actions[s] = [p](Run& run) {
      DefenseReport rep;
      rep.defense_name = p->kind;
      std::optional<Defense> simulated;
      if (p->kind == "randomized-order") {
        rep.fraction_kind = "protected_fraction";
        rep.fraction = randomized_order_protection(p->delta, p->window);
        rep.parameters = {{"delta", p->delta}, {"window", p->window}};
        simulated = RandomizedOrder{run.globals().seed.value_or(0)};
      } else if (p->kind == "time-gate") {
        if (p->cdf.empty()) throw InputError("time-gate needs --cdf");
        auto tg = time_gate_reduction(EmpiricalCdf(load_durations(run, p->cdf)), p->baseline, p->hold);
        rep.fraction_kind = "surviving_fraction";
        rep.fraction = tg.surviving_held;
        rep.parameters = {{"baseline", p->baseline}, {"hold", p->hold}, {"surviving_baseline", tg.surviving_baseline},
                          {"reduction_factor", tg.reduction_factor}};
        simulated = TimeGate{p->hold};
      } else {
        if (p->index.empty() || p->outcomes.empty()) throw InputError("hash needs --index and --outcomes");
        auto index = load_index(run, p->index, "", 1);
        auto in = run.input(p->outcomes);
        auto cost = hash_defense_cost(integrity_report(index, read_outcomes_csv(in, index)));
        rep.fraction_kind = "protected_fraction";
        rep.fraction = cost.protection;
        rep.parameters = {{"utility_cost", cost.utility_cost}};
      }
      auto j = to_json(rep);
      if (!p->sim_config.empty()) {
        if (!simulated) throw InputError("--simulate applies to randomized-order and time-gate only");
        auto config = load_config(run, p->sim_config);
        auto st = sim::stage_world(config);
        auto none = simulate_defenses(st.world, st.prediction, TimeGate{0}, p->a);
        auto with = simulate_defenses(st.world, st.prediction, *simulated, p->a);
        j["simulated"] = json{{"a", p->a}, {"attack_success_without", none.attack_success},
                              {"attack_success_with", with.attack_success}};
      }
      run.output(p->out, slurp_json(j));
    };
  }

  // ---- traffic_detector ----
  struct TrafficP {
    std::string log, index, domains, out;
    DetectOptions opts;
  };
  {
    auto* s = add("detect-downloads", "Sessions that fetched most of a dataset's URLs on owned domains");
    auto p = std::make_shared<TrafficP>();
    s->add_option("--log", p->log, "Access log: CSV epoch,client_key,url,user_agent,status or Common Log Format")->required();
    s->add_option("--index", p->index, "Index CSV of the dataset")->required();
    s->add_option("--domains", p->domains, "Owned domains, one per line")->required();
    s->add_option("--recall", p->opts.recall_threshold, "Minimum fraction of owned URLs requested");
    s->add_option("--precision", p->opts.precision_threshold, "Minimum share of monitored requests that were owned URLs");
    s->add_option("--gap", p->opts.session_gap, "Idle seconds that end a session");
    s->add_option("--out", p->out, "Sessions CSV (default stdout)");
    actions[s] = [p](Run& run) {
      auto records = load_log(run, p->log);
      OwnedUrlSet owned(load_index(run, p->index, "", 1), load_domain_list(run, p->domains));
      auto sessions = detect_downloads(records, owned, p->opts);
      run.output_with(p->out, [&](auto& o) { write_sessions_csv(o, sessions); });
    };
  }
  {
    auto* s = add("ua-summary", "Request share per user agent");
    auto p = std::make_shared<TrafficP>();
    s->add_option("--log", p->log, "Access log")->required();
    s->add_option("--out", p->out, "CSV user_agent,requests,fraction (default stdout)");
    actions[s] = [p](Run& run) {
      auto shares = user_agent_summary(load_log(run, p->log));
      run.output_with(p->out, [&](auto& o) { write_agents_csv(o, shares); });
    };
  }
  {
    auto* s = add("timeline", "Owned-URL requests as epoch,entry_ordinal,client_key for plotting");
    auto p = std::make_shared<TrafficP>();
    s->add_option("--log", p->log, "Access log")->required();
    s->add_option("--index", p->index, "Index CSV")->required();
    s->add_option("--domains", p->domains, "Owned domains, one per line")->required();
    s->add_option("--out", p->out, "CSV (default stdout)");
    actions[s] = [p](Run& run) {
      auto records = load_log(run, p->log);
      auto index = load_index(run, p->index, "", 1);
      OwnedUrlSet owned(index, load_domain_list(run, p->domains));
      auto points = timeline_export(records, index, owned);
      run.output_with(p->out, [&](auto& o) { write_timeline_csv(o, points); });
    };
  }

  // ---- simulator ----
  {
    auto* s = add("simulate", "Generate a synthetic two-snapshot world");
    struct P {
      std::string config, out_dir;
    };
    auto p = std::make_shared<P>();
    s->add_option("--config", p->config, "key=value config file")->required();
    s->add_option("--out-dir", p->out_dir, "Writes edits.jsonl, snapshot_1.json, snapshot_2.json, truth.csv")->required();
    actions[s] = [p](Run& run) {
      auto w = sim::generate_world(load_config(run, p->config));
      const fs::path dir(p->out_dir);
      run.output_with((dir / "edits.jsonl").string(), [&](auto& o) { write_edit_log_jsonl(o, w.edits); });
      for (std::size_t k = 0; k < 2; ++k) {
        run.output((dir / ("snapshot_" + std::to_string(k + 1) + ".json")).string(), slurp_json(to_json(w.snapshots[k])));
      }
      run.output_with((dir / "truth.csv").string(), [&](auto& o) { sim::write_truth_csv(o, w); });
      run.output((dir / "config.txt").string(), sim::to_config_text(w.config));
      std::cerr << "edits=" << w.edits.size() << " horizon=" << w.horizon_epoch << '\n';
    };
  }
  {
    auto* s = add("oracle", "Analytic vs simulated attack success over several seeds");
    struct P {
      std::string config, out;
      std::size_t seeds = 1;
      sim::OracleOptions opts;
    };
    auto p = std::make_shared<P>();
    s->add_option("--config", p->config, "key=value config file")->required();
    s->add_option("--seeds", p->seeds, "Number of consecutive seeds from the config seed")->check(CLI::PositiveNumber);
    s->add_option("--a-min", p->opts.a_min, "Grid start (s)");
    s->add_option("--a-max", p->opts.a_max, "Grid end (s)");
    s->add_option("--a-step", p->opts.a_step, "Grid step (s)");
    s->add_option("--out", p->out, "Table CSV (default stdout)");
    actions[s] = [p](Run& run) {
      auto base = load_config(run, p->config);
      std::vector<sim::OracleReport> reps(p->seeds);
      const auto workers = run.globals().jobs;
      parallel_for(p->seeds, workers, [&](std::size_t k) {
        auto c = base;
        c.seed = base.seed + k;
        reps[k] = sim::oracle_pipeline(c, p->opts);
      });
      run.output_with(p->out, [&](auto& o) {
        csv::write_row(o, {"seed", "articles", "containment", "max_slope_rel_error", "mean_abs_bound_error",
                           "mean_prediction_error", "best_a", "analytic_at_best", "empirical_at_best", "max_excess"});
        for (const auto& r : reps) {
          csv::write_row(o, {std::to_string(r.seed), std::to_string(r.attacked_articles), format_double(r.containment),
                             format_double(r.max_slope_rel_error), format_double(r.mean_abs_bound_error),
                             format_double(r.mean_prediction_error), format_double(r.analytic.best_a),
                             format_double(r.analytic.best_success), format_double(r.empirical_at_best),
                             format_double(r.max_excess)});
        }
      });
    };
  }

  auto error_line = [](std::string_view kind, std::string_view sub, std::string_view msg) {
    json j{{"error", kind}, {"subcommand", sub}, {"message", msg}};
    std::cerr << j.dump() << '\n';
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_line("usage", "", e.what());
    std::cerr << app.help();
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const auto t0 = std::chrono::steady_clock::now();
  Run run(g);
  try {
    actions.at(sub)(run);
  } catch (const InputError& e) {
    error_line("input", sub->get_name(), e.what());
    return 1;
  } catch (const ContradictionError& e) {
    error_line("contradiction", sub->get_name(), e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    error_line("input", sub->get_name(), e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line("internal", sub->get_name(), e.what());
    return 2;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto manifest = run.manifest(*sub, seconds).dump();
  if (g.manifest_path.empty()) {
    std::cerr << manifest << '\n';
  } else {
    std::ofstream(g.manifest_path) << manifest << '\n';
  }
  return 0;
}

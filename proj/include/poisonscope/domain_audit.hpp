#pragma once

// Expired-domain economics for distributed datasets: public-suffix grouping,
// NXDOMAIN-based expiry classification, budget-constrained purchase planning,
// in-the-wild modification signatures and curation amplification.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonscope/common.hpp"
#include "poisonscope/core_index.hpp"
#include "poisonscope/csv.hpp"
#include "poisonscope/url.hpp"

namespace poisonscope {

// ---- public suffix rules --------------------------------------------------

/// Public-suffix rule set in the publicsuffix.org list syntax: plain rules
/// ("co.uk"), wildcards ("*.ck") and exceptions ("!www.ck").
class SuffixRules {
 public:
  SuffixRules() = default;

  explicit SuffixRules(std::span<const std::string> rules) {
    for (const auto& r : rules) add(r);
  }

  void add(std::string_view rule) {
    rule = trim(rule);
    if (rule.empty() || rule.starts_with("//")) return;
    auto r = to_lower_ascii(rule);
    if (r.starts_with("!")) {
      exceptions_.insert(r.substr(1));
    } else if (r.starts_with("*.")) {
      wildcards_.insert(r.substr(2));
    } else {
      plain_.insert(r);
    }
  }

  /// Reads a list file; `//` comments and blank lines are ignored, and only
  /// the first whitespace-delimited token of each line is used.
  static SuffixRules load(std::istream& in) {
    SuffixRules rules;
    std::string line;
    while (std::getline(in, line)) {
      auto t = trim(line);
      if (t.empty() || t.starts_with("//")) continue;
      auto sp = t.find_first_of(" \t");
      rules.add(t.substr(0, sp));
    }
    return rules;
  }

  std::size_t size() const { return plain_.size() + wildcards_.size() + exceptions_.size(); }

  /// Number of trailing labels of `host` that form its public suffix.
  std::size_t public_suffix_labels(std::string_view host) const {
    auto labels = split(host, '.');
    const std::size_t k = labels.size();
    std::vector<std::string> suffixes(k);
    for (std::size_t i = k; i-- > 0;) {
      suffixes[i] = i + 1 < k ? labels[i] + "." + suffixes[i + 1] : labels[i];
    }
    std::size_t best = 1;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t len = k - i;
      if (exceptions_.contains(suffixes[i])) return len - 1;
      if (plain_.contains(suffixes[i])) best = std::max(best, len);
      if (i + 1 < k && wildcards_.contains(suffixes[i + 1])) best = std::max(best, len);
    }
    return best;
  }

  /// eTLD+1 of a host; IP literals and hosts that are themselves public
  /// suffixes are returned unchanged.
  std::string registrable_domain(std::string_view host) const {
    if (is_ip_literal(host)) return std::string(host);
    auto labels = split(host, '.');
    auto n = public_suffix_labels(host);
    if (labels.size() <= n) return std::string(host);
    std::string out;
    for (std::size_t i = labels.size() - n - 1; i < labels.size(); ++i) {
      if (!out.empty()) out.push_back('.');
      out += labels[i];
    }
    return out;
  }

 private:
  std::unordered_set<std::string> plain_;
  std::unordered_set<std::string> wildcards_;
  std::unordered_set<std::string> exceptions_;
};

/// A 30-rule subset covering the common generic and country-code suffixes.
inline const SuffixRules& builtin_suffix_rules() {
  static const SuffixRules rules = [] {
    const std::vector<std::string> list = {
        "com",    "net",    "org",    "edu",    "gov",    "io",     "info",   "biz",    "de",     "fr",
        "ru",     "cn",     "jp",     "uk",     "co.uk",  "org.uk", "ac.uk",  "gov.uk", "co.jp",  "ne.jp",
        "au",     "com.au", "net.au", "br",     "com.br", "com.cn", "in",     "co.in",  "*.ck",   "!www.ck"};
    return SuffixRules(list);
  }();
  return rules;
}

inline std::string extract_registrable_domain(std::string_view url, const SuffixRules& rules) {
  auto parts = parse_url(url);
  if (!parts) throw InputError("unparseable URL: " + std::string(url));
  return rules.registrable_domain(parts->host);
}

// ---- expiry classification -------------------------------------------------

enum class ProbeResult { Resolved, NxDomain, Timeout };

inline std::string_view to_string(ProbeResult r) {
  switch (r) {
    case ProbeResult::Resolved: return "Resolved";
    case ProbeResult::NxDomain: return "NXDOMAIN";
    case ProbeResult::Timeout: return "Timeout";
  }
  return "?";
}

inline ProbeResult parse_probe_result(std::string_view s) {
  auto t = to_lower_ascii(trim(s));
  if (t == "resolved") return ProbeResult::Resolved;
  if (t == "nxdomain") return ProbeResult::NxDomain;
  if (t == "timeout") return ProbeResult::Timeout;
  throw InputError("unknown probe result '" + std::string(s) + "'");
}

struct ResolverProbe {
  std::string domain;
  std::string vantage;
  EpochSeconds probe_epoch = 0;
  ProbeResult result = ProbeResult::Timeout;
};

enum class ExpirationStatus { Live, Expired, Inconclusive };

inline std::string_view to_string(ExpirationStatus s) {
  switch (s) {
    case ExpirationStatus::Live: return "Live";
    case ExpirationStatus::Expired: return "Expired";
    case ExpirationStatus::Inconclusive: return "Inconclusive";
  }
  return "?";
}

struct ExpirationPolicy {
  std::size_t min_probes = 4;
  std::size_t min_vantages = 2;
  std::size_t min_distinct_days = 2;  // UTC calendar days
};

/// Expired only when enough probes from enough vantages on enough days all
/// returned NXDOMAIN. Any resolution marks the domain Live.
inline ExpirationStatus classify_expiration(std::span<const ResolverProbe> probes, const ExpirationPolicy& policy = {}) {
  if (probes.empty()) throw InputError("classify_expiration needs at least one probe");
  std::set<std::string> vantages;
  std::set<EpochSeconds> days;
  bool all_nx = true;
  for (const auto& p : probes) {
    if (p.domain != probes.front().domain) throw InputError("probes for more than one domain passed together");
    if (p.probe_epoch <= 0) throw InputError("probe epoch must be positive for " + p.domain);
    if (p.result == ProbeResult::Resolved) return ExpirationStatus::Live;
    all_nx = all_nx && p.result == ProbeResult::NxDomain;
    vantages.insert(p.vantage);
    days.insert(p.probe_epoch / 86400);
  }
  if (all_nx && probes.size() >= policy.min_probes && vantages.size() >= policy.min_vantages &&
      days.size() >= policy.min_distinct_days) {
    return ExpirationStatus::Expired;
  }
  return ExpirationStatus::Inconclusive;
}

/// Groups probes by domain and classifies each; output ordered by domain.
inline std::map<std::string, ExpirationStatus> audit_domains(std::span<const ResolverProbe> probes,
                                                            const ExpirationPolicy& policy = {}) {
  std::map<std::string, std::vector<ResolverProbe>> by_domain;
  for (const auto& p : probes) by_domain[p.domain].push_back(p);
  std::map<std::string, ExpirationStatus> out;
  for (const auto& [domain, ps] : by_domain) out.emplace(domain, classify_expiration(ps, policy));
  return out;
}

/// URLs per registrable domain in an index.
inline std::map<std::string, std::uint64_t> count_images_by_domain(const DatasetIndex& index, const SuffixRules& rules) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& e : index.entries()) ++counts[extract_registrable_domain(e.url, rules)];
  return counts;
}

// ---- purchase planning -----------------------------------------------------

enum class DomainStatus { Live, Expired, Buyable };

inline std::string_view to_string(DomainStatus s) {
  switch (s) {
    case DomainStatus::Live: return "Live";
    case DomainStatus::Expired: return "Expired";
    case DomainStatus::Buyable: return "Buyable";
  }
  return "?";
}

inline DomainStatus parse_domain_status(std::string_view s) {
  auto t = to_lower_ascii(trim(s));
  if (t == "live") return DomainStatus::Live;
  if (t == "expired") return DomainStatus::Expired;
  if (t == "buyable") return DomainStatus::Buyable;
  throw InputError("unknown domain status '" + std::string(s) + "'");
}

struct DomainRecord {
  std::string domain;
  std::uint64_t image_count = 1;
  DomainStatus status = DomainStatus::Live;
  std::optional<std::int64_t> price_cents;  // registrar quote, only for Buyable
};

inline void validate(const DomainRecord& r) {
  if (r.image_count < 1) throw InputError("domain " + r.domain + ": image_count must be >= 1");
  if (r.status == DomainStatus::Buyable) {
    if (!r.price_cents) throw InputError("domain " + r.domain + ": Buyable requires a price");
    if (*r.price_cents < 0) throw InputError("domain " + r.domain + ": negative price");
  } else if (r.price_cents) {
    throw InputError("domain " + r.domain + ": price present on a non-Buyable record");
  }
}

struct PurchasePlan {
  std::vector<DomainRecord> selected;
  std::int64_t total_cost_cents = 0;
  std::uint64_t controlled_images = 0;
  double controlled_fraction = 0.0;
};

namespace detail {

/// Strict "more images per dollar" order, ties by domain name. Exact integer
/// cross-multiplication, so a zero price sorts first.
inline bool better_value(const DomainRecord& a, const DomainRecord& b) {
  auto lhs = static_cast<unsigned __int128>(a.image_count) * static_cast<unsigned __int128>(*b.price_cents);
  auto rhs = static_cast<unsigned __int128>(b.image_count) * static_cast<unsigned __int128>(*a.price_cents);
  if (lhs != rhs) return lhs > rhs;
  return a.domain < b.domain;
}

}  // namespace detail

/// Greedy selection in decreasing images-per-dollar order; records that no
/// longer fit the remaining budget are skipped and the scan continues.
inline PurchasePlan plan_purchase(std::span<const DomainRecord> records, std::uint64_t index_size,
                                  std::int64_t budget_cents) {
  if (index_size == 0) throw InputError("index size must be positive");
  if (budget_cents < 0) throw InputError("budget must be nonnegative");
  std::uint64_t total_images = 0;
  std::vector<DomainRecord> buyable;
  for (const auto& r : records) {
    validate(r);
    total_images += r.image_count;
    if (r.status == DomainStatus::Buyable) buyable.push_back(r);
  }
  if (total_images > index_size) throw InputError("index size is smaller than the sum of image counts");
  std::sort(buyable.begin(), buyable.end(), detail::better_value);

  PurchasePlan plan;
  for (auto& r : buyable) {
    if (*r.price_cents > budget_cents - plan.total_cost_cents) continue;
    plan.total_cost_cents += *r.price_cents;
    plan.controlled_images += r.image_count;
    plan.selected.push_back(std::move(r));
  }
  plan.controlled_fraction = static_cast<double>(plan.controlled_images) / static_cast<double>(index_size);
  return plan;
}

struct CostPoint {
  std::int64_t budget_cents = 0;
  double controlled_fraction = 0.0;
};

inline std::vector<CostPoint> cost_curve(std::span<const DomainRecord> records, std::uint64_t index_size,
                                         std::span<const std::int64_t> budget_grid) {
  if (!std::is_sorted(budget_grid.begin(), budget_grid.end())) throw InputError("budget grid must be ascending");
  std::vector<CostPoint> curve;
  curve.reserve(budget_grid.size());
  for (auto b : budget_grid) curve.push_back({b, plan_purchase(records, index_size, b).controlled_fraction});
  return curve;
}

// ---- in-the-wild signature scan -------------------------------------------

struct FlaggedDomain {
  std::string domain;
  std::size_t modified_entries = 0;
  EpochSeconds purchase_epoch = 0;
};

/// Domains that serve modified content and changed hands after the index was
/// released. Sorted by modified-entry count, descending, then by name.
inline std::vector<FlaggedDomain> attack_signature_scan(
    const DatasetIndex& index, std::span<const VerificationOutcome> verification,
    const std::map<std::string, std::optional<EpochSeconds>>& whois_purchase_epoch,
    const SuffixRules& rules = builtin_suffix_rules()) {
  if (verification.size() != index.size()) throw InputError("verification outcomes not aligned with index");
  std::map<std::string, std::size_t> modified;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (verification[i] == VerificationOutcome::Modified) {
      ++modified[extract_registrable_domain(index.entries()[i].url, rules)];
    }
  }
  std::vector<FlaggedDomain> flagged;
  for (const auto& [domain, count] : modified) {
    auto it = whois_purchase_epoch.find(domain);
    if (it == whois_purchase_epoch.end() || !it->second) continue;
    if (*it->second > index.release_epoch()) flagged.push_back({domain, count, *it->second});
  }
  std::stable_sort(flagged.begin(), flagged.end(), [](const FlaggedDomain& a, const FlaggedDomain& b) {
    return a.modified_entries > b.modified_entries;
  });
  return flagged;
}

// ---- curation amplification ------------------------------------------------

struct AmplificationResult {
  double upstream_fraction = 0.0;
  std::map<std::string, double> subset_fractions;
};

inline AmplificationResult amplification(std::uint64_t poison_bytes, std::uint64_t upstream_bytes,
                                         const std::map<std::string, std::uint64_t>& subsets) {
  if (poison_bytes == 0 || upstream_bytes == 0) throw InputError("byte counts must be positive");
  auto frac = [&](std::uint64_t corpus) {
    return std::min(1.0, static_cast<double>(poison_bytes) / static_cast<double>(corpus));
  };
  AmplificationResult r;
  r.upstream_fraction = frac(upstream_bytes);
  for (const auto& [name, bytes] : subsets) {
    if (bytes == 0) throw InputError("subset " + name + " has zero size");
    r.subset_fractions[name] = frac(bytes);
  }
  return r;
}

// ---- file formats ------------------------------------------------------------

/// `domain,vantage,epoch,result`
inline std::vector<ResolverProbe> read_probes_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"domain", "vantage", "epoch", "result"});
  std::vector<ResolverProbe> probes;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 4) throw InputError("probe record " + std::to_string(reader.record_number()) + ": expected 4 fields");
    probes.push_back({to_lower_ascii(trim(row[0])), std::string(trim(row[1])),
                      parse_int<EpochSeconds>(row[2], "epoch"), parse_probe_result(row[3])});
  }
  return probes;
}

/// `domain,image_count,status,price_cents`; price empty unless Buyable.
inline std::vector<DomainRecord> read_domain_records_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"domain", "image_count", "status", "price_cents"});
  std::vector<DomainRecord> records;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 4) throw InputError("domain record " + std::to_string(reader.record_number()) + ": expected 4 fields");
    DomainRecord r;
    r.domain = to_lower_ascii(trim(row[0]));
    r.image_count = parse_int<std::uint64_t>(row[1], "image_count");
    r.status = parse_domain_status(row[2]);
    if (!trim(row[3]).empty()) r.price_cents = parse_int<std::int64_t>(row[3], "price_cents");
    validate(r);
    records.push_back(std::move(r));
  }
  return records;
}

/// `domain,purchase_epoch`; an empty epoch means no whois date is known.
inline std::map<std::string, std::optional<EpochSeconds>> read_whois_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"domain", "purchase_epoch"});
  std::map<std::string, std::optional<EpochSeconds>> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 2) throw InputError("whois record " + std::to_string(reader.record_number()) + ": expected 2 fields");
    std::optional<EpochSeconds> epoch;
    if (!trim(row[1]).empty()) epoch = parse_int<EpochSeconds>(row[1], "purchase_epoch");
    out[to_lower_ascii(trim(row[0]))] = epoch;
  }
  return out;
}

inline void write_plan_csv(std::ostream& out, const PurchasePlan& plan) {
  csv::write_row(out, {"domain", "image_count", "price_cents", "cumulative_cost_cents", "cumulative_images"});
  std::int64_t cost = 0;
  std::uint64_t images = 0;
  for (const auto& r : plan.selected) {
    cost += *r.price_cents;
    images += r.image_count;
    csv::write_row(out, {r.domain, std::to_string(r.image_count), std::to_string(*r.price_cents),
                         std::to_string(cost), std::to_string(images)});
  }
}

inline void write_curve_csv(std::ostream& out, std::span<const CostPoint> curve) {
  csv::write_row(out, {"budget_cents", "controlled_fraction"});
  for (const auto& p : curve) {
    csv::write_row(out, {std::to_string(p.budget_cents), nlohmann::json(p.controlled_fraction).dump()});
  }
}

inline nlohmann::ordered_json to_json(std::span<const FlaggedDomain> flagged) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& f : flagged) {
    arr.push_back({{"domain", f.domain}, {"modified_entries", f.modified_entries}, {"purchase_epoch", f.purchase_epoch}});
  }
  return arr;
}

inline nlohmann::ordered_json to_json(const AmplificationResult& r) {
  nlohmann::ordered_json j;
  j["upstream_fraction"] = r.upstream_fraction;
  j["subset_fractions"] = nlohmann::ordered_json::object();
  for (const auto& [name, f] : r.subset_fractions) j["subset_fractions"][name] = f;
  return j;
}

}  // namespace poisonscope

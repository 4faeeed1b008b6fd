#pragma once

// Independent brute-force reimplementations used to check the library.

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "poisonscope/poisonscope.hpp"

namespace oracle {

using namespace poisonscope;

/// Repeatedly buys the best-value record that still fits.
inline PurchasePlan greedy_with_skip(std::vector<DomainRecord> records, std::uint64_t index_size, std::int64_t budget) {
  PurchasePlan plan;
  std::vector<bool> taken(records.size(), false);
  while (true) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (taken[i] || r.status != DomainStatus::Buyable || *r.price_cents > budget - plan.total_cost_cents) continue;
      if (!best) {
        best = i;
        continue;
      }
      const auto& b = records[*best];
      // r beats b when images_r / price_r > images_b / price_b
      const __int128 lhs = static_cast<__int128>(r.image_count) * *b.price_cents;
      const __int128 rhs = static_cast<__int128>(b.image_count) * *r.price_cents;
      if (lhs > rhs || (lhs == rhs && r.domain < b.domain)) best = i;
    }
    if (!best) break;
    taken[*best] = true;
    plan.total_cost_cents += *records[*best].price_cents;
    plan.controlled_images += records[*best].image_count;
    plan.selected.push_back(records[*best]);
  }
  plan.controlled_fraction = static_cast<double>(plan.controlled_images) / static_cast<double>(index_size);
  return plan;
}

inline double ecdf(const std::vector<std::int64_t>& xs, double t) {
  std::size_t c = 0;
  for (auto x : xs) c += static_cast<double>(x) <= t;
  return static_cast<double>(c) / static_cast<double>(xs.size());
}

/// O(n^2) envelope: low = max included edit over articles at or before i in
/// the same job, high = min excluded edit over articles at or after i.
inline std::map<ArticleId, std::pair<EpochSeconds, EpochSeconds>> envelope(const std::vector<EditRecord>& edits,
                                                                           const SnapshotMeta& meta,
                                                                           EpochSeconds upper) {
  std::map<ArticleId, std::pair<EpochSeconds, EpochSeconds>> out;
  for (const auto& [id, rev] : meta.captured_revision) {
    (void)rev;
    EpochSeconds low = meta.start_epoch, high = upper;
    for (const auto& e : edits) {
      auto it = meta.captured_revision.find(e.article_id);
      if (it == meta.captured_revision.end() || meta.job_of(e.article_id) != meta.job_of(id)) continue;
      const bool included = e.revision_id <= it->second;
      if (included && e.article_id <= id) low = std::max(low, e.edit_epoch);
      if (!included && e.article_id >= id) high = std::min(high, e.edit_epoch);
    }
    out[id] = {low, high};
  }
  return out;
}

// ---- synthetic access logs ---------------------------------------------------------

struct Traffic {
  DatasetIndex index{"synthetic", 1, {}};
  std::set<std::string> domains;
  std::vector<AccessRecord> records;
  std::set<std::string> planted;
  std::set<std::string> near_miss;
};

inline std::string owned_url(std::size_t i) {
  return "http://img.own" + std::to_string(i % 6) + ".com/" + std::to_string(i) + ".jpg";
}

/// 1000 owned URLs over 6 domains (plus 200 elsewhere); 5 crawlers meeting
/// both thresholds, 3 that miss one, and `noise` scattered requests.
inline Traffic make_traffic(std::uint64_t seed, std::size_t noise = 10'000) {
  std::mt19937_64 rng(seed);
  Traffic t;
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < 1000; ++i) entries.push_back({i, owned_url(i), "", {}});
  for (std::size_t i = 1000; i < 1200; ++i) entries.push_back({i, "http://cdn.other.org/" + std::to_string(i) + ".jpg", "", {}});
  t.index = DatasetIndex("synthetic", 1, entries);
  for (int d = 0; d < 6; ++d) t.domains.insert("own" + std::to_string(d) + ".com");

  const EpochSeconds t0 = 1'600'000'000;
  auto crawler = [&](const std::string& client, double recall, std::size_t extra, EpochSeconds start) {
    std::vector<std::size_t> ids(1000);
    for (std::size_t i = 0; i < 1000; ++i) ids[i] = i;
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(static_cast<std::size_t>(recall * 1000));
    std::sort(ids.begin(), ids.end());
    EpochSeconds now = start;
    for (auto i : ids) {
      now += 1 + static_cast<EpochSeconds>(rng() % 20);
      t.records.push_back({now, client, owned_url(i), "img2dataset", 200});
    }
    for (std::size_t k = 0; k < extra; ++k) {
      now += 1 + static_cast<EpochSeconds>(rng() % 20);
      t.records.push_back({now, client, "http://www.own" + std::to_string(k % 6) + ".com/page" + std::to_string(k), "img2dataset", 404});
    }
    // Requests elsewhere do not count against precision.
    for (std::size_t k = 0; k < 50; ++k) {
      t.records.push_back({now + static_cast<EpochSeconds>(k), client, "http://cdn.other.org/" + std::to_string(1000 + k) + ".jpg", "img2dataset", 200});
    }
  };
  const double recalls[] = {0.9, 0.92, 0.95, 1.0, 1.0};
  const std::size_t extras[] = {0, 100, 300, 0, 1000};
  for (int c = 0; c < 5; ++c) {
    auto key = "planted-" + std::to_string(c);
    crawler(key, recalls[c], extras[c], t0 + c * 200'000);
    t.planted.insert(key);
  }
  crawler("near-0", 0.85, 0, t0 + 50'000);
  crawler("near-1", 0.85, 50, t0 + 250'000);
  crawler("near-2", 0.95, 1162, t0 + 450'000);  // precision 950/2112
  t.near_miss = {"near-0", "near-1", "near-2"};

  const char* agents[] = {"Mozilla/5.0", "curl/7.68", "", "Googlebot/2.1"};
  for (std::size_t k = 0; k < noise; ++k) {
    AccessRecord r;
    r.epoch = t0 + static_cast<EpochSeconds>(rng() % 1'000'000);
    r.client_key = "noise-" + std::to_string(rng() % 2000);
    r.url = rng() % 2 ? owned_url(rng() % 1000) : "http://www.own" + std::to_string(rng() % 6) + ".com/";
    r.user_agent = agents[rng() % 4];
    r.status = 200;
    t.records.push_back(r);
  }
  std::shuffle(t.records.begin(), t.records.end(), rng);
  return t;
}

/// Recounts a session by scanning every record.
struct Recount {
  double recall = 0, precision = 0;
};

inline Recount recount(const Traffic& t, const DownloadSession& s) {
  std::set<std::string> owned;
  for (const auto& e : t.index.entries()) {
    auto host = parse_url(e.url)->host;
    for (const auto& d : t.domains) {
      if (host == d || (host.size() > d.size() && host.ends_with("." + d))) owned.insert(e.url);
    }
  }
  std::set<std::string> hit;
  std::size_t monitored = 0, owned_requests = 0;
  for (const auto& r : t.records) {
    if (r.client_key != s.client_key || r.epoch < s.t_start || r.epoch > s.t_end) continue;
    auto host = parse_url(r.url)->host;
    bool on_domain = false;
    for (const auto& d : t.domains) on_domain = on_domain || host == d || host.ends_with("." + d);
    if (!on_domain) continue;
    ++monitored;
    if (owned.contains(r.url)) {
      ++owned_requests;
      hit.insert(r.url);
    }
  }
  return {static_cast<double>(hit.size()) / static_cast<double>(owned.size()),
          static_cast<double>(owned_requests) / static_cast<double>(monitored)};
}

}  // namespace oracle

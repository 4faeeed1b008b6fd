#pragma once

// Dataset-download detection in access logs of domains that host part of a
// distributed dataset's index.

#include <algorithm>
#include <cmath>
#include <ctime>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "poisonscope/common.hpp"
#include "poisonscope/core_index.hpp"
#include "poisonscope/csv.hpp"
#include "poisonscope/snapshot_timing.hpp"
#include "poisonscope/url.hpp"

namespace poisonscope {

struct AccessRecord {
  EpochSeconds epoch = 0;
  std::string client_key;
  std::string url;
  std::string user_agent;
  int status = 0;

  friend bool operator==(const AccessRecord&, const AccessRecord&) = default;
  friend auto operator<=>(const AccessRecord& a, const AccessRecord& b) {
    return std::tie(a.epoch, a.client_key, a.url, a.user_agent, a.status) <=>
           std::tie(b.epoch, b.client_key, b.url, b.user_agent, b.status);
  }
};

struct ParsedLog {
  std::vector<AccessRecord> records;
  std::size_t malformed = 0;
};

namespace detail {

inline const std::string kLogCsvHeader = "epoch,client_key,url,user_agent,status";

inline std::optional<EpochSeconds> parse_clf_time(std::string_view s) {
  // 10/Oct/2000:13:55:36 -0700
  static constexpr std::string_view kMonths[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                 "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  if (s.size() < 20 || s[2] != '/' || s[6] != '/' || s[11] != ':') return std::nullopt;
  std::tm tm{};
  try {
    tm.tm_mday = parse_int<int>(s.substr(0, 2), "day");
    auto mon = s.substr(3, 3);
    auto it = std::find(std::begin(kMonths), std::end(kMonths), mon);
    if (it == std::end(kMonths)) return std::nullopt;
    tm.tm_mon = static_cast<int>(it - std::begin(kMonths));
    tm.tm_year = parse_int<int>(s.substr(7, 4), "year") - 1900;
    tm.tm_hour = parse_int<int>(s.substr(12, 2), "hour");
    tm.tm_min = parse_int<int>(s.substr(15, 2), "minute");
    tm.tm_sec = parse_int<int>(s.substr(18, 2), "second");
    EpochSeconds t = timegm(&tm);
    if (s.size() >= 26 && s[20] == ' ') {
      const int sign = s[21] == '-' ? -1 : 1;
      const int hh = parse_int<int>(s.substr(22, 2), "tz hour");
      const int mm = parse_int<int>(s.substr(24, 2), "tz minute");
      t -= sign * (hh * 3600 + mm * 60);
    }
    return t;
  } catch (const InputError&) {
    return std::nullopt;
  }
}

/// Reads a double-quoted token starting at `pos`; backslash escapes the next char.
inline std::optional<std::string> quoted(std::string_view line, std::size_t& pos) {
  while (pos < line.size() && line[pos] == ' ') ++pos;
  if (pos >= line.size() || line[pos] != '"') return std::nullopt;
  std::string out;
  for (++pos; pos < line.size(); ++pos) {
    if (line[pos] == '\\' && pos + 1 < line.size()) {
      out.push_back(line[++pos]);
    } else if (line[pos] == '"') {
      ++pos;
      return out;
    } else {
      out.push_back(line[pos]);
    }
  }
  return std::nullopt;
}

/// Common/Combined Log Format, optionally prefixed by a virtual host
/// (`vhost[:port] ip ident user [time] "request" status bytes ["referer" "agent"]`).
/// Path-only request targets are made absolute with the virtual host.
inline std::optional<AccessRecord> parse_clf_line(std::string_view line) {
  auto lb = line.find('[');
  auto rb = line.find(']', lb == std::string_view::npos ? 0 : lb);
  if (lb == std::string_view::npos || rb == std::string_view::npos) return std::nullopt;
  std::vector<std::string> head;
  for (auto& tok : split(trim(line.substr(0, lb)), ' ')) {
    if (!tok.empty()) head.push_back(tok);
  }
  std::string vhost, ip;
  if (head.size() == 4) {
    vhost = head[0];
    ip = head[1];
  } else if (head.size() == 3) {
    ip = head[0];
  } else {
    return std::nullopt;
  }
  auto epoch = parse_clf_time(line.substr(lb + 1, rb - lb - 1));
  if (!epoch || *epoch <= 0) return std::nullopt;
  std::size_t pos = rb + 1;
  auto request = quoted(line, pos);
  if (!request) return std::nullopt;
  auto parts = split(*request, ' ');
  if (parts.size() < 2) return std::nullopt;
  std::string target = parts[1];
  while (pos < line.size() && line[pos] == ' ') ++pos;
  auto status_end = line.find(' ', pos);
  int status = 0;
  try {
    status = parse_int<int>(line.substr(pos, status_end == std::string_view::npos ? line.size() - pos : status_end - pos), "status");
  } catch (const InputError&) {
    return std::nullopt;
  }
  std::string agent;
  if (status_end != std::string_view::npos) {
    pos = line.find(' ', status_end + 1);  // skip bytes
    if (pos != std::string_view::npos) {
      auto referer = quoted(line, pos);
      if (referer) {
        auto ua = quoted(line, pos);
        if (!ua) return std::nullopt;
        agent = *ua;
      }
    }
  }
  if (agent == "-") agent.clear();
  if (!target.starts_with("http://") && !target.starts_with("https://") && !vhost.empty()) {
    auto host = vhost.substr(0, vhost.find(':'));
    target = "http://" + host + (target.starts_with("/") ? "" : "/") + target;
  }
  return AccessRecord{*epoch, ip, target, agent, status};
}

inline std::optional<AccessRecord> parse_csv_fields(const std::vector<std::string>& row) {
  if (row.size() != 5) return std::nullopt;
  try {
    AccessRecord r{parse_int<EpochSeconds>(row[0], "epoch"), row[1], row[2], row[3], parse_int<int>(row[4], "status")};
    if (r.epoch <= 0 || r.client_key.empty()) return std::nullopt;
    return r;
  } catch (const InputError&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// CSV (`epoch,client_key,url,user_agent,status` header) or Common Log Format,
/// chosen by the first line. Malformed lines are skipped and counted.
inline ParsedLog parse_log(std::istream& in) {
  ParsedLog log;
  std::string first;
  while (first.empty() && std::getline(in, first)) {
    if (!first.empty() && first.back() == '\r') first.pop_back();
    if (trim(first).empty()) first.clear();
  }
  if (std::string(trim(first)) == detail::kLogCsvHeader) {
    csv::Reader reader(in);
    std::vector<std::string> row;
    while (true) {
      try {
        if (!reader.next(row)) break;
      } catch (const InputError&) {
        ++log.malformed;
        break;
      }
      if (row.size() == 1 && trim(row[0]).empty()) continue;
      if (auto r = detail::parse_csv_fields(row)) log.records.push_back(std::move(*r));
      else ++log.malformed;
    }
  } else {
    auto handle = [&](std::string_view line) {
      if (trim(line).empty()) return;
      if (auto r = detail::parse_clf_line(line)) log.records.push_back(std::move(*r));
      else ++log.malformed;
    };
    handle(first);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      handle(line);
    }
  }
  if (log.records.empty()) throw InputError("no parseable access-log lines");
  return log;
}

inline void write_log_csv(std::ostream& out, std::span<const AccessRecord> records) {
  out << detail::kLogCsvHeader << '\n';
  for (const auto& r : records) {
    csv::write_row(out, {std::to_string(r.epoch), r.client_key, r.url, r.user_agent, std::to_string(r.status)});
  }
}

// ---- owned url set ---------------------------------------------------------------

class OwnedUrlSet {
 public:
  /// Owned URLs are the index entries hosted on (subdomains of) `domains`.
  OwnedUrlSet(const DatasetIndex& index, std::set<std::string> domains) : dataset_name_(index.name()) {
    for (const auto& d : domains) domains_.insert(to_lower_ascii(trim(d)));
    if (domains_.empty()) throw InputError("owned domain set is empty");
    for (const auto& e : index.entries()) {
      auto d = owning_domain(e.url);
      if (!d) continue;
      urls_.emplace(e.url, Owned{e.ordinal, *d});
      required_.insert(*d);
    }
    if (urls_.empty()) throw InputError("no index URL is hosted on the owned domains");
  }

  const std::string& dataset_name() const { return dataset_name_; }
  const std::set<std::string>& domains() const { return domains_; }
  /// Owned domains that host at least one dataset URL; each must be hit.
  const std::set<std::string>& required_domains() const { return required_; }
  std::size_t size() const { return urls_.size(); }

  struct Owned {
    std::uint64_t ordinal;
    std::string domain;
  };

  const Owned* find(const std::string& url) const {
    auto it = urls_.find(url);
    return it == urls_.end() ? nullptr : &it->second;
  }

  /// The owned domain that hosts `url`, if any.
  std::optional<std::string> owning_domain(std::string_view url) const {
    auto parts = parse_url(url);
    if (!parts) return std::nullopt;
    for (const auto& d : domains_) {
      if (host_within(parts->host, d)) return d;
    }
    return std::nullopt;
  }

 private:
  std::string dataset_name_;
  std::set<std::string> domains_;
  std::set<std::string> required_;
  std::unordered_map<std::string, Owned> urls_;
};

inline std::set<std::string> read_domain_list(std::istream& in) {
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.starts_with("#")) continue;
    out.insert(to_lower_ascii(t));
  }
  return out;
}

// ---- download detection ------------------------------------------------------------

struct DetectOptions {
  double recall_threshold = 0.9;
  double precision_threshold = 0.5;
  EpochSeconds session_gap = 86400;
  double ordered_threshold = 0.95;
};

struct DownloadSession {
  std::string client_key;
  std::string dataset_name;
  EpochSeconds t_start = 0;
  EpochSeconds t_end = 0;
  double recall = 0;
  double precision = 0;
  std::size_t domains_hit = 0;
  std::size_t distinct_owned_urls = 0;
  std::size_t owned_requests = 0;
  std::size_t monitored_requests = 0;
  double order_correlation = 0;  // Spearman(request time, index ordinal)
  bool ordered = false;
};

/// Spearman rank correlation with average ranks for ties; 0 when either side
/// is constant or fewer than two points exist.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return 0.0;
  auto ranks = [n](std::span<const double> v) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Sessions (per client, split at gaps > session_gap) that fetched at least
/// `recall_threshold` of the owned URLs, hit every owned domain hosting
/// dataset URLs, and spent at least `precision_threshold` of their requests
/// to monitored domains on dataset URLs. Thresholds are inclusive.
inline std::vector<DownloadSession> detect_downloads(std::span<const AccessRecord> records, const OwnedUrlSet& owned,
                                                     const DetectOptions& options = {}) {
  std::map<std::string, std::vector<const AccessRecord*>> by_client;
  std::unordered_map<std::string, bool> monitored_host;
  for (const auto& r : records) {
    auto parts = parse_url(r.url);
    if (!parts) continue;
    auto [it, fresh] = monitored_host.try_emplace(parts->host, false);
    if (fresh) {
      for (const auto& d : owned.domains()) it->second = it->second || host_within(parts->host, d);
    }
    if (it->second) by_client[r.client_key].push_back(&r);
  }

  std::vector<DownloadSession> sessions;
  for (auto& [client, reqs] : by_client) {
    std::sort(reqs.begin(), reqs.end(), [](const AccessRecord* a, const AccessRecord* b) { return *a < *b; });
    std::size_t begin = 0;
    while (begin < reqs.size()) {
      std::size_t end = begin + 1;
      while (end < reqs.size() && reqs[end]->epoch - reqs[end - 1]->epoch <= options.session_gap) ++end;

      DownloadSession s;
      s.client_key = client;
      s.dataset_name = owned.dataset_name();
      s.t_start = reqs[begin]->epoch;
      s.t_end = reqs[end - 1]->epoch;
      s.monitored_requests = end - begin;
      std::unordered_set<std::string_view> distinct;
      std::set<std::string_view> domains;
      std::vector<double> times, ordinals;
      for (std::size_t i = begin; i < end; ++i) {
        if (const auto* o = owned.find(reqs[i]->url)) {
          ++s.owned_requests;
          distinct.insert(reqs[i]->url);
          domains.insert(o->domain);
          times.push_back(static_cast<double>(reqs[i]->epoch));
          ordinals.push_back(static_cast<double>(o->ordinal));
        }
      }
      s.distinct_owned_urls = distinct.size();
      s.domains_hit = domains.size();
      s.recall = static_cast<double>(distinct.size()) / static_cast<double>(owned.size());
      s.precision = static_cast<double>(s.owned_requests) / static_cast<double>(s.monitored_requests);
      s.order_correlation = spearman(times, ordinals);
      s.ordered = s.order_correlation > options.ordered_threshold;
      if (s.recall >= options.recall_threshold && s.precision >= options.precision_threshold &&
          s.domains_hit == owned.required_domains().size()) {
        sessions.push_back(std::move(s));
      }
      begin = end;
    }
  }
  std::sort(sessions.begin(), sessions.end(), [](const DownloadSession& a, const DownloadSession& b) {
    return std::tie(a.t_start, a.client_key) < std::tie(b.t_start, b.client_key);
  });
  return sessions;
}

inline void write_sessions_csv(std::ostream& out, std::span<const DownloadSession> sessions) {
  csv::write_row(out, {"client_key", "dataset", "t_start", "t_end", "recall", "precision", "domains_hit",
                       "owned_requests", "monitored_requests", "order_correlation", "ordered"});
  for (const auto& s : sessions) {
    csv::write_row(out, {s.client_key, s.dataset_name, std::to_string(s.t_start), std::to_string(s.t_end),
                         format_double(s.recall), format_double(s.precision), std::to_string(s.domains_hit),
                         std::to_string(s.owned_requests), std::to_string(s.monitored_requests),
                         format_double(s.order_correlation), s.ordered ? "1" : "0"});
  }
}

// ---- user agents & timelines ----------------------------------------------------

struct AgentShare {
  std::string agent;
  std::size_t requests = 0;
  double fraction = 0;
};

inline std::vector<AgentShare> user_agent_summary(std::span<const AccessRecord> records) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[r.user_agent.empty() ? "(none)" : r.user_agent];
  std::vector<AgentShare> out;
  for (const auto& [agent, n] : counts) {
    out.push_back({agent, n, static_cast<double>(n) / static_cast<double>(records.size())});
  }
  std::stable_sort(out.begin(), out.end(), [](const AgentShare& a, const AgentShare& b) { return a.requests > b.requests; });
  return out;
}

inline void write_agents_csv(std::ostream& out, std::span<const AgentShare> shares) {
  csv::write_row(out, {"user_agent", "requests", "fraction"});
  for (const auto& s : shares) csv::write_row(out, {s.agent, std::to_string(s.requests), format_double(s.fraction)});
}

struct TimelinePoint {
  EpochSeconds epoch = 0;
  std::uint64_t ordinal = 0;
  std::string client_key;
};

/// Requests for owned URLs as (time, index ordinal, client), time ordered.
inline std::vector<TimelinePoint> timeline_export(std::span<const AccessRecord> records, const DatasetIndex& index,
                                                  const OwnedUrlSet& owned) {
  std::unordered_map<std::string_view, std::uint64_t> ordinal;
  for (const auto& e : index.entries()) ordinal.emplace(e.url, e.ordinal);
  std::vector<TimelinePoint> out;
  for (const auto& r : records) {
    if (!owned.find(r.url)) continue;
    auto it = ordinal.find(r.url);
    if (it == ordinal.end()) continue;
    out.push_back({r.epoch, it->second, r.client_key});
  }
  std::sort(out.begin(), out.end(), [](const TimelinePoint& a, const TimelinePoint& b) {
    return std::tie(a.epoch, a.client_key, a.ordinal) < std::tie(b.epoch, b.client_key, b.ordinal);
  });
  return out;
}

inline void write_timeline_csv(std::ostream& out, std::span<const TimelinePoint> points) {
  csv::write_row(out, {"epoch", "entry_ordinal", "client_key"});
  for (const auto& p : points) csv::write_row(out, {std::to_string(p.epoch), std::to_string(p.ordinal), p.client_key});
}

}  // namespace poisonscope

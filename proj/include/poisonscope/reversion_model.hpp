#pragma once

// Reversion detection from edit comments and the empirical reversion-delay
// distribution.

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poisonscope/common.hpp"
#include "poisonscope/snapshot_timing.hpp"

namespace poisonscope {

/// Per-code-point simple Unicode case folding of UTF-8 text. Ill-formed
/// sequences are replaced by U+FFFD.
inline std::string case_fold(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const int32_t length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) c = 0xFFFD;
    c = u_foldCase(c, U_FOLD_CASE_DEFAULT);
    uint8_t buf[U8_MAX_LENGTH];
    int32_t n = 0;
    U8_APPEND_UNSAFE(buf, n, c);
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
  }
  return out;
}

class RevertMarkerSet {
 public:
  RevertMarkerSet(std::string language_code, std::vector<std::string> markers)
      : language_(std::move(language_code)) {
    if (markers.empty()) throw InputError("marker set '" + language_ + "' is empty");
    for (auto& m : markers) {
      if (m.empty()) throw InputError("marker set '" + language_ + "' contains an empty marker");
      markers_.push_back(case_fold(m));
    }
  }

  /// Plain-text list: one marker per line, `#` starts a comment line. Leading
  /// and trailing spaces are significant ("rv " differs from "rv"), so only
  /// line terminators are stripped; blank lines are skipped.
  static RevertMarkerSet load(std::istream& in, std::string language_code) {
    std::vector<std::string> markers;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.starts_with("#") || trim(line).empty()) continue;
      markers.push_back(line);
    }
    return RevertMarkerSet(std::move(language_code), std::move(markers));
  }

  /// English defaults. Not an authoritative list; edit data/markers/en.txt.
  static const RevertMarkerSet& english_default() {
    static const RevertMarkerSet set("en", {"revert", "rv ", "undid", "undo", "rvv"});
    return set;
  }

  const std::string& language() const { return language_; }
  const std::vector<std::string>& markers() const { return markers_; }

  RevertMarkerSet merged_with(const RevertMarkerSet& other) const {
    auto all = markers_;
    all.insert(all.end(), other.markers_.begin(), other.markers_.end());
    return RevertMarkerSet(language_ + "+" + other.language_, std::move(all));
  }

 private:
  std::string language_;
  std::vector<std::string> markers_;  // case-folded
};

inline bool classify_reversion(std::string_view comment, const RevertMarkerSet& markers) {
  if (comment.empty()) return false;
  auto folded = case_fold(comment);
  return std::any_of(markers.markers().begin(), markers.markers().end(),
                     [&](const std::string& m) { return folded.find(m) != std::string::npos; });
}

struct ReversionDurations {
  std::vector<std::int64_t> durations;  // seconds
  std::size_t reverts = 0;              // edits classified as reversions
  std::size_t without_predecessor = 0;  // reverts that were an article's first edit
  std::size_t negative_dropped = 0;     // clock anomalies
};

/// Pairs every reversion with the immediately preceding edit of the same
/// article and records the elapsed time. Edits must be sorted by (article, rev).
inline ReversionDurations reversion_durations(std::span<const EditRecord> edits, const RevertMarkerSet& markers) {
  ReversionDurations out;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (i > 0 && !edit_order(edits[i - 1], edits[i])) {
      throw InputError("edits not sorted by (article, revision) at article " + std::to_string(edits[i].article_id));
    }
    if (!classify_reversion(edits[i].comment, markers)) continue;
    ++out.reverts;
    if (i == 0 || edits[i - 1].article_id != edits[i].article_id) {
      ++out.without_predecessor;
      continue;
    }
    auto d = edits[i].edit_epoch - edits[i - 1].edit_epoch;
    if (d < 0) {
      ++out.negative_dropped;
      continue;
    }
    out.durations.push_back(d);
  }
  return out;
}

/// Right-continuous empirical CDF: evaluate(t) = #{d <= t} / n.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<std::int64_t> durations) : sorted_(std::move(durations)) {
    if (sorted_.empty()) throw InputError("cannot build a CDF from an empty duration list");
    for (auto d : sorted_) {
      if (d < 0) throw InputError("negative duration in CDF input");
    }
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::size_t n() const { return sorted_.size(); }
  const std::vector<std::int64_t>& sorted_durations() const { return sorted_; }

  std::size_t count_at_most(double t) const {
    if (std::isnan(t)) return 0;
    return static_cast<std::size_t>(
        std::upper_bound(sorted_.begin(), sorted_.end(), t,
                         [](double v, std::int64_t d) { return v < static_cast<double>(d); }) -
        sorted_.begin());
  }

  double evaluate(double t) const {
    if (t < 0) return 0.0;
    return static_cast<double>(count_at_most(t)) / static_cast<double>(sorted_.size());
  }

  /// 1 - evaluate(t), computed from counts so exact ratios stay exact.
  double survival(double t) const {
    if (t < 0) return 1.0;
    return static_cast<double>(sorted_.size() - count_at_most(t)) / static_cast<double>(sorted_.size());
  }

 private:
  std::vector<std::int64_t> sorted_;
};

inline std::vector<std::int64_t> read_durations(std::istream& in) {
  std::vector<std::int64_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    out.push_back(parse_int<std::int64_t>(line, "duration"));
  }
  return out;
}

inline void write_durations(std::ostream& out, std::span<const std::int64_t> durations) {
  for (auto d : durations) out << d << '\n';
}

}  // namespace poisonscope

#pragma once

// Distributed dataset indices: (url, caption, sha256) tuples, content hashing,
// per-entry verification and integrity/link-rot reporting.

#include <openssl/evp.h>

#include <array>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonscope/common.hpp"
#include "poisonscope/csv.hpp"
#include "poisonscope/url.hpp"

namespace poisonscope {

/// Lowercase hex SHA-256 of the exact bytes.
inline std::string compute_content_hash(std::span<const std::byte> content) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(content.data(), content.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

inline std::string compute_content_hash(std::string_view content) {
  return compute_content_hash(std::as_bytes(std::span(content.data(), content.size())));
}

struct IndexEntry {
  std::uint64_t ordinal = 0;
  std::string url;
  std::string caption;
  std::optional<std::string> expected_hash;
};

/// Throws InputError if the url has no host or the hash is not 64 lowercase hex chars.
inline void validate(const IndexEntry& entry) {
  if (!parse_url(entry.url)) {
    throw InputError("index entry " + std::to_string(entry.ordinal) + ": not an absolute URL: " + entry.url);
  }
  if (entry.expected_hash && !is_lower_hex_sha256(*entry.expected_hash)) {
    throw InputError("index entry " + std::to_string(entry.ordinal) + ": malformed sha256");
  }
}

class DatasetIndex {
 public:
  /// Sorts entries by ordinal and validates every invariant.
  DatasetIndex(std::string name, EpochSeconds release_epoch, std::vector<IndexEntry> entries)
      : name_(std::move(name)), release_epoch_(release_epoch), entries_(std::move(entries)) {
    if (release_epoch_ <= 0) throw InputError("release epoch must be positive");
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const IndexEntry& a, const IndexEntry& b) { return a.ordinal < b.ordinal; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      validate(entries_[i]);
      if (i > 0 && entries_[i].ordinal == entries_[i - 1].ordinal) {
        throw InputError("duplicate index ordinal " + std::to_string(entries_[i].ordinal));
      }
    }
  }

  const std::string& name() const { return name_; }
  EpochSeconds release_epoch() const { return release_epoch_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::string name_;
  EpochSeconds release_epoch_;
  std::vector<IndexEntry> entries_;
};

enum class VerificationOutcome { Intact, Modified, Missing, InvalidContent, Unverifiable };

inline std::string_view to_string(VerificationOutcome o) {
  switch (o) {
    case VerificationOutcome::Intact: return "Intact";
    case VerificationOutcome::Modified: return "Modified";
    case VerificationOutcome::Missing: return "Missing";
    case VerificationOutcome::InvalidContent: return "InvalidContent";
    case VerificationOutcome::Unverifiable: return "Unverifiable";
  }
  return "?";
}

inline VerificationOutcome parse_outcome(std::string_view s) {
  s = trim(s);
  for (auto o : {VerificationOutcome::Intact, VerificationOutcome::Modified, VerificationOutcome::Missing,
                 VerificationOutcome::InvalidContent, VerificationOutcome::Unverifiable}) {
    if (s == to_string(o)) return o;
  }
  throw InputError("unknown verification outcome '" + std::string(s) + "'");
}

/// `content_valid` is the caller's media-type probe result for `fetched`.
inline VerificationOutcome verify_entry(const IndexEntry& entry, std::optional<std::span<const std::byte>> fetched,
                                        bool content_valid) {
  if (!fetched) return VerificationOutcome::Missing;
  if (!content_valid) return VerificationOutcome::InvalidContent;
  if (!entry.expected_hash) return VerificationOutcome::Unverifiable;
  return compute_content_hash(*fetched) == *entry.expected_hash ? VerificationOutcome::Intact
                                                                 : VerificationOutcome::Modified;
}

/// Magic-byte probe for JPEG, PNG, GIF and WebP.
inline bool probe_image_magic(std::span<const std::byte> bytes) {
  auto at = [&](std::size_t i) { return std::to_integer<unsigned char>(bytes[i]); };
  auto starts = [&](std::string_view sig, std::size_t offset = 0) {
    if (bytes.size() < offset + sig.size()) return false;
    for (std::size_t i = 0; i < sig.size(); ++i) {
      if (at(offset + i) != static_cast<unsigned char>(sig[i])) return false;
    }
    return true;
  };
  return starts("\xFF\xD8\xFF") || starts("\x89PNG\r\n\x1A\n") || starts("GIF87a") || starts("GIF89a") ||
         (starts("RIFF") && starts("WEBP", 8));
}

struct IntegrityReport {
  std::size_t total = 0;
  std::size_t live = 0;  // entries for which content was fetched at all
  std::size_t hash_match = 0;
  std::size_t hash_mismatch = 0;
  std::size_t missing = 0;
  std::size_t invalid = 0;
  std::size_t unverifiable = 0;

  double fraction(std::size_t count) const {
    return total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
  }
};

inline IntegrityReport integrity_report(const DatasetIndex& index, std::span<const VerificationOutcome> outcomes) {
  if (outcomes.size() != index.size()) {
    throw InputError("outcome count " + std::to_string(outcomes.size()) + " does not match index size " +
                     std::to_string(index.size()));
  }
  IntegrityReport r;
  r.total = outcomes.size();
  for (auto o : outcomes) {
    switch (o) {
      case VerificationOutcome::Intact: ++r.hash_match; break;
      case VerificationOutcome::Modified: ++r.hash_mismatch; break;
      case VerificationOutcome::Missing: ++r.missing; break;
      case VerificationOutcome::InvalidContent: ++r.invalid; break;
      case VerificationOutcome::Unverifiable: ++r.unverifiable; break;
    }
  }
  r.live = r.total - r.missing;
  return r;
}

// ---- file formats ---------------------------------------------------------

/// Index CSV with header `ordinal,url,caption,sha256`; sha256 may be empty.
inline DatasetIndex read_index_csv(std::istream& in, std::string name, EpochSeconds release_epoch) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"ordinal", "url", "caption", "sha256"});
  std::vector<IndexEntry> entries;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 4) {
      throw InputError("index record " + std::to_string(reader.record_number()) + ": expected 4 fields");
    }
    IndexEntry e;
    e.ordinal = parse_int<std::uint64_t>(row[0], "ordinal");
    e.url = row[1];
    e.caption = row[2];
    if (auto h = trim(row[3]); !h.empty()) e.expected_hash = std::string(h);
    entries.push_back(std::move(e));
  }
  return DatasetIndex(std::move(name), release_epoch, std::move(entries));
}

inline void write_index_csv(std::ostream& out, const DatasetIndex& index) {
  csv::write_row(out, {"ordinal", "url", "caption", "sha256"});
  for (const auto& e : index.entries()) {
    csv::write_row(out, {std::to_string(e.ordinal), e.url, e.caption, e.expected_hash.value_or("")});
  }
}

/// Outcomes CSV `ordinal,outcome`, aligned to the index by ordinal.
inline std::vector<VerificationOutcome> read_outcomes_csv(std::istream& in, const DatasetIndex& index) {
  csv::Reader reader(in);
  csv::expect_header(reader, {"ordinal", "outcome"});
  std::vector<std::pair<std::uint64_t, VerificationOutcome>> rows;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 2) throw InputError("outcome record " + std::to_string(reader.record_number()) + ": expected 2 fields");
    rows.emplace_back(parse_int<std::uint64_t>(row[0], "ordinal"), parse_outcome(row[1]));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (rows.size() != index.size()) {
    throw InputError("outcome count " + std::to_string(rows.size()) + " does not match index size " +
                     std::to_string(index.size()));
  }
  std::vector<VerificationOutcome> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != index.entries()[i].ordinal) {
      throw InputError("outcome ordinals do not match index ordinals at ordinal " + std::to_string(rows[i].first));
    }
    out.push_back(rows[i].second);
  }
  return out;
}

inline void write_outcomes_csv(std::ostream& out, const DatasetIndex& index,
                               std::span<const VerificationOutcome> outcomes) {
  csv::write_row(out, {"ordinal", "outcome"});
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    csv::write_row(out, {std::to_string(index.entries()[i].ordinal), std::string(to_string(outcomes[i]))});
  }
}

inline nlohmann::ordered_json to_json(const IntegrityReport& r) {
  nlohmann::ordered_json j;
  j["total"] = r.total;
  j["live"] = r.live;
  j["hash_match"] = r.hash_match;
  j["hash_mismatch"] = r.hash_mismatch;
  j["missing"] = r.missing;
  j["invalid"] = r.invalid;
  j["unverifiable"] = r.unverifiable;
  j["fractions"] = {{"live", r.fraction(r.live)},
                    {"hash_match", r.fraction(r.hash_match)},
                    {"hash_mismatch", r.fraction(r.hash_mismatch)},
                    {"missing", r.fraction(r.missing)},
                    {"invalid", r.fraction(r.invalid)},
                    {"unverifiable", r.fraction(r.unverifiable)}};
  return j;
}

inline void write_report_csv(std::ostream& out, const IntegrityReport& r) {
  csv::write_row(out, {"total", "live", "hash_match", "hash_mismatch", "missing", "invalid", "unverifiable",
                       "live_fraction", "hash_match_fraction", "hash_mismatch_fraction", "missing_fraction",
                       "invalid_fraction", "unverifiable_fraction"});
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  csv::write_row(out, {std::to_string(r.total), std::to_string(r.live), std::to_string(r.hash_match),
                       std::to_string(r.hash_mismatch), std::to_string(r.missing), std::to_string(r.invalid),
                       std::to_string(r.unverifiable), num(r.fraction(r.live)), num(r.fraction(r.hash_match)),
                       num(r.fraction(r.hash_mismatch)), num(r.fraction(r.missing)), num(r.fraction(r.invalid)),
                       num(r.fraction(r.unverifiable))});
}

}  // namespace poisonscope

#pragma once

// Minimal RFC-4180 reader/writer. Quoted fields may contain commas, doubled
// quotes and line breaks; both LF and CRLF record terminators are accepted.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "poisonscope/common.hpp"

namespace poisonscope::csv {

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record into `row`. Returns false at end of input.
  bool next(std::vector<std::string>& row) {
    row.clear();
    if (in_.peek() == std::char_traits<char>::eof()) return false;
    ++record_;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    char c;
    while (in_.get(c)) {
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get(c);
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == '"' && !field_started) {
        quoted = true;
        field_started = true;
      } else if (c == ',') {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
      } else if (c == '\n') {
        ++line_;
        break;
      } else if (c == '\r' && in_.peek() == '\n') {
        continue;
      } else {
        field.push_back(c);
        field_started = true;
      }
    }
    if (quoted) throw InputError("unterminated quoted CSV field in record " + std::to_string(record_));
    row.push_back(std::move(field));
    return true;
  }

  std::size_t record_number() const { return record_; }

 private:
  std::istream& in_;
  std::size_t record_ = 0;
  std::size_t line_ = 0;
};

/// Reads the header row and checks it against `expected` (exact, in order).
inline void expect_header(Reader& reader, const std::vector<std::string>& expected) {
  std::vector<std::string> header;
  if (!reader.next(header)) throw InputError("empty CSV input; expected header");
  for (auto& h : header) h = std::string(trim(h));
  if (!header.empty() && header.front().starts_with("\xEF\xBB\xBF")) header.front().erase(0, 3);
  if (header != expected) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    throw InputError("unexpected CSV header; expected '" + want + "'");
  }
}

inline std::string escape(std::string_view field) {
  bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

}  // namespace poisonscope::csv

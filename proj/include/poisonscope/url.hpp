#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "poisonscope/common.hpp"

namespace poisonscope {

struct UrlParts {
  std::string scheme;  // lowercased
  std::string host;    // lowercased; IPv6 literals keep their brackets
  std::optional<unsigned> port;
  std::string path;    // everything after the authority, may be empty
};

/// Parses an absolute URL of the form scheme://[userinfo@]host[:port][/...].
/// Returns nullopt for relative references or an empty host.
inline std::optional<UrlParts> parse_url(std::string_view url) {
  url = trim(url);
  auto colon = url.find("://");
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  UrlParts parts;
  auto scheme = url.substr(0, colon);
  for (char c : scheme) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') return std::nullopt;
  }
  parts.scheme = to_lower_ascii(scheme);

  auto rest = url.substr(colon + 3);
  auto end = rest.find_first_of("/?#");
  auto authority = rest.substr(0, end);
  parts.path = end == std::string_view::npos ? std::string() : std::string(rest.substr(end));

  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);

  std::string_view host = authority;
  std::string_view port;
  if (!authority.empty() && authority.front() == '[') {
    auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = authority.substr(0, close + 1);
    auto after = authority.substr(close + 1);
    if (!after.empty()) {
      if (after.front() != ':') return std::nullopt;
      port = after.substr(1);
    }
  } else if (auto c = authority.rfind(':'); c != std::string_view::npos) {
    host = authority.substr(0, c);
    port = authority.substr(c + 1);
  }
  if (!port.empty()) {
    unsigned p = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
    if (ec != std::errc{} || ptr != port.data() + port.size() || p > 65535) return std::nullopt;
    parts.port = p;
  }
  while (!host.empty() && host.back() == '.') host.remove_suffix(1);
  if (host.empty()) return std::nullopt;
  parts.host = to_lower_ascii(host);
  return parts;
}

inline bool is_ipv4_literal(std::string_view host) {
  auto octets = split(host, '.');
  if (octets.size() != 4) return false;
  for (const auto& o : octets) {
    if (o.empty() || o.size() > 3) return false;
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(o.data(), o.data() + o.size(), v);
    if (ec != std::errc{} || ptr != o.data() + o.size() || v > 255) return false;
  }
  return true;
}

inline bool is_ip_literal(std::string_view host) {
  return (!host.empty() && host.front() == '[') || is_ipv4_literal(host);
}

/// True when `host` equals `domain` or is a subdomain of it.
inline bool host_within(std::string_view host, std::string_view domain) {
  if (host.size() == domain.size()) return host == domain;
  return host.size() > domain.size() && host.ends_with(domain) &&
         host[host.size() - domain.size() - 1] == '.';
}

}  // namespace poisonscope

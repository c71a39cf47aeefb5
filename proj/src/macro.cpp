#include "spfaudit/macro.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <vector>

namespace spfaudit {

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string dotted(const IpAddress& ip) {
  if (const auto* v4 = std::get_if<Ipv4>(&ip)) return v4->to_string();
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (auto b : std::get<Ipv6>(ip).bytes()) {
    if (!out.empty()) out += '.';
    out += kHex[b >> 4];
    out += '.';
    out += kHex[b & 0xf];
  }
  return out;
}

std::string url_encode(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
      out += static_cast<char>(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

std::string local_part(std::string_view sender) {
  const auto at = sender.rfind('@');
  if (at == std::string_view::npos || at == 0) return "postmaster";
  return std::string(sender.substr(0, at));
}

/// Applies digit/reverse transformers and delimiter splitting.
std::string transform(std::string_view value, int keep, bool reverse, std::string_view delimiters) {
  if (delimiters.empty()) delimiters = ".";
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= value.size(); ++i) {
    if (i == value.size() || delimiters.find(value[i]) != std::string_view::npos) {
      parts.push_back(value.substr(start, i - start));
      start = i + 1;
    }
  }
  if (reverse) std::reverse(parts.begin(), parts.end());
  if (keep > 0 && static_cast<std::size_t>(keep) < parts.size())
    parts.erase(parts.begin(), parts.end() - keep);
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += '.';
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string sender_domain(std::string_view sender) {
  const auto at = sender.rfind('@');
  return to_lower(at == std::string_view::npos ? sender : sender.substr(at + 1));
}

std::optional<std::string> expand_macros(std::string_view tmpl, const SessionInput& input, std::string_view domain,
                                         bool exp_context) {
  const std::string sender = input.sender.empty() ? "postmaster@" + std::string(domain)
                             : input.sender.find('@') == std::string::npos ? "postmaster@" + input.sender
                                                                            : input.sender;
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c != '%') {
      out += c;
      continue;
    }
    if (i + 1 >= tmpl.size()) return std::nullopt;
    const char n = tmpl[++i];
    if (n == '%') {
      out += '%';
      continue;
    }
    if (n == '_') {
      out += ' ';
      continue;
    }
    if (n == '-') {
      out += "%20";
      continue;
    }
    if (n != '{') return std::nullopt;
    const auto close = tmpl.find('}', i + 1);
    if (close == std::string_view::npos || close == i + 1) return std::nullopt;
    std::string_view body = tmpl.substr(i + 1, close - i - 1);
    i = close;

    const char letter = body[0];
    const bool encode = std::isupper(static_cast<unsigned char>(letter));
    std::string value;
    switch (std::tolower(static_cast<unsigned char>(letter))) {
      case 's': value = sender; break;
      case 'l': value = local_part(sender); break;
      case 'o': value = sender_domain(sender); break;
      case 'd': value = std::string(domain); break;
      case 'i': value = dotted(input.client_ip); break;
      case 'p': value = "unknown"; break;
      case 'v': value = std::holds_alternative<Ipv4>(input.client_ip) ? "in-addr" : "ip6"; break;
      case 'h': value = input.helo.value_or(sender_domain(sender)); break;
      case 'c':
        if (!exp_context) return std::nullopt;
        value = to_string(input.client_ip);
        break;
      case 'r':
        if (!exp_context) return std::nullopt;
        value = "unknown";
        break;
      case 't':
        if (!exp_context) return std::nullopt;
        value = std::to_string(
            std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
                .count());
        break;
      default:
        return std::nullopt;
    }

    std::size_t p = 1;
    int keep = 0;
    while (p < body.size() && std::isdigit(static_cast<unsigned char>(body[p]))) {
      keep = keep * 10 + (body[p] - '0');
      if (keep > 128) return std::nullopt;
      ++p;
    }
    if (p > 1 && keep == 0) return std::nullopt;
    bool reverse = false;
    if (p < body.size() && (body[p] == 'r' || body[p] == 'R')) {
      reverse = true;
      ++p;
    }
    auto delimiters = body.substr(p);
    for (char d : delimiters)
      if (std::string_view(".-+,/_=").find(d) == std::string_view::npos) return std::nullopt;

    std::string expanded = (p > 1 || !delimiters.empty()) ? transform(value, keep, reverse, delimiters)
                                                          : value;
    out += encode ? url_encode(expanded) : expanded;
  }
  return out;
}

std::string truncate_domain(std::string name) {
  while (name.size() > 253) {
    const auto dot = name.find('.');
    if (dot == std::string::npos) break;
    name.erase(0, dot + 1);
  }
  return name;
}

}  // namespace spfaudit

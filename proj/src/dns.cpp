#include "spfaudit/dns.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

#include "spfaudit/ip.hpp"

namespace spfaudit {

std::string_view rrtype_name(RrType type) {
  switch (type) {
    case RrType::TXT: return "TXT";
    case RrType::A: return "A";
    case RrType::AAAA: return "AAAA";
    case RrType::MX: return "MX";
    case RrType::PTR: return "PTR";
    case RrType::SPF: return "SPF";
  }
  return "TXT";
}

std::optional<RrType> rrtype_from_name(std::string_view name) {
  for (auto t : {RrType::TXT, RrType::A, RrType::AAAA, RrType::MX, RrType::PTR, RrType::SPF})
    if (rrtype_name(t) == name) return t;
  return std::nullopt;
}

std::string_view dns_status_name(DnsStatus status) {
  switch (status) {
    case DnsStatus::Records: return "Records";
    case DnsStatus::NxDomain: return "NxDomain";
    case DnsStatus::Empty: return "Empty";
    case DnsStatus::Timeout: return "Timeout";
    case DnsStatus::ServFail: return "ServFail";
    case DnsStatus::LabelTooLong: return "LabelTooLong";
    case DnsStatus::NameTooLong: return "NameTooLong";
    case DnsStatus::DecodeError: return "DecodeError";
  }
  return "ServFail";
}

std::string normalize_name(std::string_view name) {
  std::string out(name);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); });
  if (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

std::optional<DnsStatus> check_name(std::string_view name) {
  std::size_t label = 0;
  for (char c : name) {
    if (c == '.') {
      label = 0;
      continue;
    }
    if (++label > 63) return DnsStatus::LabelTooLong;
  }
  // Wire form: one length octet per label plus the root octet.
  if (!name.empty() && name.size() + 2 > 255) return DnsStatus::NameTooLong;
  return std::nullopt;
}

std::optional<std::pair<int, std::string>> parse_mx(std::string_view payload) {
  const auto sp = payload.find(' ');
  if (sp == std::string_view::npos) return std::nullopt;
  int pref = 0;
  auto [p, ec] = std::from_chars(payload.data(), payload.data() + sp, pref);
  if (ec != std::errc{} || p != payload.data() + sp) return std::nullopt;
  return std::pair{pref, normalize_name(payload.substr(sp + 1))};
}

namespace {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int extra = 0;
    if (c < 0x80) extra = 0;
    else if ((c & 0xe0) == 0xc0 && c >= 0xc2) extra = 1;
    else if ((c & 0xf0) == 0xe0) extra = 2;
    else if ((c & 0xf8) == 0xf0 && c <= 0xf4) extra = 3;
    else return false;
    if (i + extra >= s.size()) return false;
    for (int k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xc0) != 0x80) return false;
    i += extra + 1;
  }
  return true;
}

}  // namespace

DnsAnswer validate_text_payloads(const DnsQuery& q, DnsAnswer answer) {
  if (answer.has_records() && (q.type == RrType::TXT || q.type == RrType::SPF)) {
    for (const auto& r : answer.records)
      if (!valid_utf8(r)) return DnsAnswer::failure(DnsStatus::DecodeError);
  }
  return answer;
}

// ---------------------------------------------------------------------------
// ZoneFixture

void ZoneFixture::add(std::string_view name, RrType type, std::string payload) {
  records[{normalize_name(name), type}].push_back(std::move(payload));
}

void ZoneFixture::fail(std::string_view name, DnsStatus status) { failures[normalize_name(name)] = status; }

DnsAnswer ZoneFixture::lookup(const DnsQuery& query) const {
  if (auto bad = check_name(query.name)) return DnsAnswer::failure(*bad);
  if (auto it = records.find({query.name, query.type}); it != records.end()) return DnsAnswer::of(it->second);
  if (auto it = failures.find(query.name); it != failures.end()) return DnsAnswer::failure(it->second);
  auto it = records.lower_bound({query.name, RrType::TXT});
  if (it != records.end() && it->first.first == query.name) return DnsAnswer::failure(DnsStatus::Empty);
  return DnsAnswer::failure(default_status);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view next_word(std::string_view& s) {
  s = trim(s);
  const auto end = std::min(s.size(), s.find_first_of(" \t"));
  auto word = s.substr(0, end);
  s.remove_prefix(end);
  s = trim(s);
  return word;
}

/// Removes a trailing "# comment" that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted && c == '\\') {
      ++i;
    } else if (c == '"') {
      quoted = !quoted;
    } else if (c == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

/// One or more double-quoted strings, concatenated. Supports \" \\ and \DDD.
std::string parse_quoted(std::string_view value, std::size_t lineno) {
  std::string out;
  std::size_t i = 0;
  bool any = false;
  while (i < value.size()) {
    if (std::isspace(static_cast<unsigned char>(value[i]))) {
      ++i;
      continue;
    }
    if (value[i] != '"') throw ZoneParseError(lineno, "expected double-quoted string");
    any = true;
    ++i;
    bool closed = false;
    while (i < value.size()) {
      const char c = value[i++];
      if (c == '"') {
        closed = true;
        break;
      }
      if (c != '\\') {
        out += c;
        continue;
      }
      if (i >= value.size()) throw ZoneParseError(lineno, "dangling escape");
      if (std::isdigit(static_cast<unsigned char>(value[i]))) {
        if (i + 3 > value.size()) throw ZoneParseError(lineno, "short \\DDD escape");
        int code = 0;
        auto [p, ec] = std::from_chars(value.data() + i, value.data() + i + 3, code);
        if (ec != std::errc{} || p != value.data() + i + 3 || code > 255)
          throw ZoneParseError(lineno, "bad \\DDD escape");
        out += static_cast<char>(code);
        i += 3;
      } else {
        out += value[i++];
      }
    }
    if (!closed) throw ZoneParseError(lineno, "unterminated string");
  }
  if (!any) throw ZoneParseError(lineno, "missing TXT value");
  return out;
}

}  // namespace

ZoneFixture load_zone_fixture(std::istream& in) {
  ZoneFixture zone;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view rest = trim(strip_comment(line));
    if (rest.empty()) continue;
    const auto name = next_word(rest);
    const auto type = next_word(rest);
    if (type.empty()) throw ZoneParseError(lineno, "expected '<name> <RRTYPE> <value>'");
    if (type == "ERROR") {
      static const std::pair<std::string_view, DnsStatus> kinds[] = {{"NXDOMAIN", DnsStatus::NxDomain},
                                                                      {"EMPTY", DnsStatus::Empty},
                                                                      {"TIMEOUT", DnsStatus::Timeout},
                                                                      {"SERVFAIL", DnsStatus::ServFail}};
      auto it = std::find_if(std::begin(kinds), std::end(kinds), [&](const auto& k) { return k.first == rest; });
      if (it == std::end(kinds)) throw ZoneParseError(lineno, "unknown ERROR kind '" + std::string(rest) + "'");
      zone.fail(name, it->second);
      continue;
    }
    auto rrtype = rrtype_from_name(type);
    if (!rrtype) throw ZoneParseError(lineno, "unknown record type '" + std::string(type) + "'");
    if (rest.empty()) throw ZoneParseError(lineno, "missing value");
    switch (*rrtype) {
      case RrType::TXT:
      case RrType::SPF:
        zone.add(name, *rrtype, parse_quoted(rest, lineno));
        break;
      case RrType::A:
        if (!Ipv4::parse(rest)) throw ZoneParseError(lineno, "invalid IPv4 address");
        zone.add(name, *rrtype, std::string(rest));
        break;
      case RrType::AAAA:
        if (!Ipv6::parse(rest)) throw ZoneParseError(lineno, "invalid IPv6 address");
        zone.add(name, *rrtype, std::string(rest));
        break;
      case RrType::MX: {
        auto pref = next_word(rest);
        auto host = next_word(rest);
        int p = 0;
        auto [ptr, ec] = std::from_chars(pref.data(), pref.data() + pref.size(), p);
        if (ec != std::errc{} || ptr != pref.data() + pref.size() || host.empty() || !rest.empty())
          throw ZoneParseError(lineno, "MX value must be '<pref> <host>'");
        zone.add(name, *rrtype, std::to_string(p) + ' ' + normalize_name(host));
        break;
      }
      case RrType::PTR:
        zone.add(name, *rrtype, normalize_name(rest));
        break;
    }
  }
  return zone;
}

ZoneFixture load_zone_fixture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open zone fixture '" + path + "'");
  return load_zone_fixture(in);
}

DnsAnswer ZoneResolver::resolve(const DnsQuery& query) { return validate_text_payloads(query, zone_.lookup(query)); }

DnsAnswer OverlayResolver::resolve(const DnsQuery& query) {
  const bool known = zone_.failures.contains(query.name) || [&] {
    auto it = zone_.records.lower_bound({query.name, RrType::TXT});
    return it != zone_.records.end() && it->first.first == query.name;
  }();
  if (known) return validate_text_payloads(query, zone_.lookup(query));
  return fallback_->resolve(query);
}

// ---------------------------------------------------------------------------
// CachingResolver

std::size_t CachingResolver::KeyHash::operator()(const DnsQuery& q) const {
  return std::hash<std::string>{}(q.name) * 31 + static_cast<std::size_t>(q.type);
}

CachingResolver::CachingResolver(ResolverPtr inner, std::size_t capacity)
    : inner_(std::move(inner)), capacity_(std::max<std::size_t>(capacity, 1)) {}

DnsAnswer CachingResolver::resolve(const DnsQuery& query) {
  {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(query); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      ++stats_.hits;
      return it->second->second;
    }
    ++stats_.misses;
  }
  DnsAnswer answer = inner_->resolve(query);
  std::lock_guard lock(mu_);
  if (auto it = index_.find(query); it != index_.end()) {
    // Filled concurrently; keep the first answer.
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
  }
  lru_.emplace_front(query, answer);
  index_[query] = lru_.begin();
  if (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
  stats_.entries = lru_.size();
  return answer;
}

CacheStats CachingResolver::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::shared_ptr<CachingResolver> with_cache(ResolverPtr inner, std::size_t capacity) {
  return std::make_shared<CachingResolver>(std::move(inner), capacity);
}

// ---------------------------------------------------------------------------
// RateLimitedResolver

RateLimitedResolver::RateLimitedResolver(ResolverPtr inner, double qps, RateClock clock)
    : inner_(std::move(inner)),
      qps_(qps),
      burst_(std::ceil(qps)),
      clock_(std::move(clock)),
      tokens_(burst_),
      last_(clock_.now()) {
  if (!(qps > 0)) throw std::invalid_argument("qps must be positive");
}

DnsAnswer RateLimitedResolver::resolve(const DnsQuery& query) {
  RateClock::Duration wait{};
  {
    std::lock_guard lock(mu_);
    const auto now = clock_.now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * qps_);
    tokens_ -= 1.0;
    if (tokens_ < 0)
      wait = std::chrono::duration_cast<RateClock::Duration>(std::chrono::duration<double>(-tokens_ / qps_));
  }
  if (wait.count() > 0) clock_.sleep(wait);
  return inner_->resolve(query);
}

ResolverPtr with_rate_limit(ResolverPtr inner, double qps) {
  return std::make_shared<RateLimitedResolver>(std::move(inner), qps);
}

}  // namespace spfaudit

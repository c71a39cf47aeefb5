#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

namespace spfaudit {

enum class RrType { TXT, A, AAAA, MX, PTR, SPF };

std::string_view rrtype_name(RrType type);
std::optional<RrType> rrtype_from_name(std::string_view name);

/// Lowercases and strips one trailing dot.
std::string normalize_name(std::string_view name);

struct DnsQuery {
  std::string name;
  RrType type = RrType::TXT;

  DnsQuery() = default;
  DnsQuery(std::string_view n, RrType t) : name(normalize_name(n)), type(t) {}

  bool operator==(const DnsQuery&) const = default;
};

enum class DnsStatus {
  Records,
  NxDomain,
  Empty,  // name exists, no data of this type
  Timeout,
  ServFail,
  LabelTooLong,
  NameTooLong,
  DecodeError,
};

std::string_view dns_status_name(DnsStatus status);

/// Answer to one query. Payloads are text: TXT/SPF strings joined, A/AAAA
/// literals, "pref host" for MX, host names for PTR.
struct DnsAnswer {
  DnsStatus status = DnsStatus::NxDomain;
  std::vector<std::string> records;

  static DnsAnswer of(std::vector<std::string> records) {
    if (records.empty()) return {DnsStatus::Empty, {}};
    return {DnsStatus::Records, std::move(records)};
  }
  static DnsAnswer failure(DnsStatus status) { return {status, {}}; }

  bool has_records() const { return status == DnsStatus::Records; }
  /// NXDOMAIN or NODATA: counts against the void-lookup limit.
  bool is_void() const { return status == DnsStatus::NxDomain || status == DnsStatus::Empty; }
  /// Transient failure: SPF temperror.
  bool is_transient() const { return status == DnsStatus::Timeout || status == DnsStatus::ServFail; }

  bool operator==(const DnsAnswer&) const = default;
};

/// LabelTooLong / NameTooLong when the query name cannot be put on the wire.
std::optional<DnsStatus> check_name(std::string_view name);

/// DecodeError when a TXT/SPF payload is not valid UTF-8.
DnsAnswer validate_text_payloads(const DnsQuery& query, DnsAnswer answer);

/// Parses an MX payload "pref host".
std::optional<std::pair<int, std::string>> parse_mx(std::string_view payload);

/// Uniform resolution interface. Implementations must tolerate concurrent
/// resolve() calls; failures are answers, never exceptions.
class Resolver {
 public:
  virtual ~Resolver() = default;
  virtual DnsAnswer resolve(const DnsQuery& query) = 0;
};

using ResolverPtr = std::shared_ptr<Resolver>;

// ---------------------------------------------------------------------------
// Zone fixtures

class ZoneParseError : public std::runtime_error {
 public:
  ZoneParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ZoneFixture {
  std::map<std::pair<std::string, RrType>, std::vector<std::string>> records;
  /// Name-level failures injected with "<name> ERROR <kind>".
  std::map<std::string, DnsStatus> failures;
  DnsStatus default_status = DnsStatus::NxDomain;

  void add(std::string_view name, RrType type, std::string payload);
  void fail(std::string_view name, DnsStatus status);

  DnsAnswer lookup(const DnsQuery& query) const;
};

/// Reads the line-oriented fixture format:
///   <name> <RRTYPE> <value>     TXT/SPF values double-quoted
///   <name> ERROR <NXDOMAIN|EMPTY|TIMEOUT|SERVFAIL>
///   # comment
ZoneFixture load_zone_fixture(std::istream& in);
ZoneFixture load_zone_fixture_file(const std::string& path);

class ZoneResolver final : public Resolver {
 public:
  explicit ZoneResolver(ZoneFixture zone) : zone_(std::move(zone)) {}
  DnsAnswer resolve(const DnsQuery& query) override;
  const ZoneFixture& zone() const { return zone_; }

 private:
  const ZoneFixture zone_;
};

/// Answers from the zone when it has an entry for the name, otherwise from
/// the fallback resolver.
class OverlayResolver final : public Resolver {
 public:
  OverlayResolver(ZoneFixture zone, ResolverPtr fallback) : zone_(std::move(zone)), fallback_(std::move(fallback)) {}
  DnsAnswer resolve(const DnsQuery& query) override;

 private:
  const ZoneFixture zone_;
  ResolverPtr fallback_;
};

// ---------------------------------------------------------------------------
// Decorators

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t entries = 0;
};

/// LRU cache in front of another resolver.
class CachingResolver final : public Resolver {
 public:
  CachingResolver(ResolverPtr inner, std::size_t capacity);
  DnsAnswer resolve(const DnsQuery& query) override;
  CacheStats stats() const;

 private:
  struct KeyHash {
    std::size_t operator()(const DnsQuery& q) const;
  };
  using Entry = std::pair<DnsQuery, DnsAnswer>;

  ResolverPtr inner_;
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<DnsQuery, std::list<Entry>::iterator, KeyHash> index_;
  CacheStats stats_;
};

std::shared_ptr<CachingResolver> with_cache(ResolverPtr inner, std::size_t capacity);

/// Time source for the rate limiter; replaceable in tests.
struct RateClock {
  using Duration = std::chrono::steady_clock::duration;
  using TimePoint = std::chrono::steady_clock::time_point;
  std::function<TimePoint()> now = [] { return std::chrono::steady_clock::now(); };
  std::function<void(Duration)> sleep = [](Duration d) { std::this_thread::sleep_for(d); };
};

/// Token bucket: burst of ceil(qps) queries, refilled at qps per second.
class RateLimitedResolver final : public Resolver {
 public:
  RateLimitedResolver(ResolverPtr inner, double qps, RateClock clock = {});
  DnsAnswer resolve(const DnsQuery& query) override;

 private:
  ResolverPtr inner_;
  const double qps_;
  const double burst_;
  RateClock clock_;
  std::mutex mu_;
  double tokens_;
  RateClock::TimePoint last_;
};

ResolverPtr with_rate_limit(ResolverPtr inner, double qps);

}  // namespace spfaudit

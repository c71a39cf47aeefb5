#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spfaudit/dns.hpp"
#include "spfaudit/ipset.hpp"
#include "spfaudit/parser.hpp"
#include "spfaudit/record.hpp"

namespace spfaudit {

enum class Provenance { Direct, Include };

struct Contribution {
  std::string term;    // rendered source term
  std::string origin;  // domain whose record holds the term
  Cidr4 cidr;
  Provenance provenance = Provenance::Direct;
};

enum class EdgeKind { Include, Redirect };

struct GraphEdge {
  std::string from;
  std::string to;
  EdgeKind kind = EdgeKind::Include;

  bool operator==(const GraphEdge&) const = default;
};

struct IncludeUse {
  std::string domain;
  std::uint64_t allowed_ips = 0;  // count from expanding the include on its own

  bool operator==(const IncludeUse&) const = default;
};

struct ExpansionReport {
  IpSet ipset;
  std::vector<std::pair<Ipv6, int>> ipv6;  // kept apart from every IPv4 statistic
  std::vector<Contribution> contributions;
  std::vector<std::string> unexpandable;  // "domain: term"
  int include_depth_max = 0;
  int top_level_includes = 0;
  bool truncated = false;
  std::string truncated_reason;
  std::vector<IncludeUse> includes;  // every domain reached through include, sorted
  std::vector<GraphEdge> edges;
  /// Qualifier of the `all` ending the domain's own record or its redirect chain.
  std::optional<Qualifier> final_all;
  bool ptr_used = false;
};

struct ExpandLimits {
  int max_depth = 20;
  bool honor_lookup_budget = false;
  int max_lookups = 10;
};

/// Memoized per-domain address counts for Table-5-style include listings.
/// Safe for concurrent use.
class IncludeCounter {
 public:
  std::uint64_t count(const std::string& domain, Resolver& resolver, const ExpandLimits& limits);

 private:
  std::mutex mu_;
  std::map<std::string, std::uint64_t> memo_;
};

/// Recursively expands include/redirect, a, mx and ip4 into the set of IPv4
/// addresses the policy authorizes. Only Pass-qualified directives add
/// addresses. Never fails: problems become unexpandable or truncated notes.
ExpansionReport expand_authorized_ips(std::string_view domain, Resolver& resolver, const ExpandLimits& limits = {},
                                      IncludeCounter* counter = nullptr);

/// Same, starting from an already parsed top-level record.
ExpansionReport expand_record(std::string_view domain, const SpfRecord& record, Resolver& resolver,
                              const ExpandLimits& limits = {}, IncludeCounter* counter = nullptr);

std::uint64_t count_ips(const IpSet& set);

/// Contributions with prefix <= 16, split by provenance.
struct LargeCidrs {
  std::map<int, std::uint64_t> direct;
  std::map<int, std::uint64_t> include;

  bool operator==(const LargeCidrs&) const = default;
};
LargeCidrs flag_large_cidrs(const ExpansionReport& report);

/// Prefix histogram of contributions that come from included records.
std::map<int, std::uint64_t> subnet_size_distribution(const ExpansionReport& report);

/// Everything the corpus keeps about one expansion.
struct ExpansionSummary {
  std::uint64_t v4_count = 0;
  int include_depth_max = 0;
  int top_level_includes = 0;
  bool truncated = false;
  std::string truncated_reason;
  std::size_t unexpandable = 0;
  std::vector<IncludeUse> includes;
  std::vector<GraphEdge> edges;
  LargeCidrs large_cidrs;
  std::map<int, std::uint64_t> include_subnets;

  bool operator==(const ExpansionSummary&) const = default;
};
ExpansionSummary summarize(const ExpansionReport& report);

struct IncludeGraph {
  std::vector<std::string> nodes;  // sorted
  std::vector<GraphEdge> edges;    // deduplicated, sorted
  std::map<std::string, std::uint64_t> usage;
  std::map<std::string, std::uint64_t> allowed_ips;
};

struct AuditedExpansion {
  std::string domain;
  const ExpansionSummary* expansion = nullptr;
};

IncludeGraph build_include_graph(std::span<const AuditedExpansion> audits);

struct RankedInclude {
  std::string domain;
  std::uint64_t used_by = 0;
  std::uint64_t allowed_ips = 0;

  bool operator==(const RankedInclude&) const = default;
};

/// By usage descending, ties by name; n = 0 means all.
std::vector<RankedInclude> top_includes(const IncludeGraph& graph, std::size_t n = 0);

/// Number of include terms written in a record.
int count_top_level_includes(const SpfRecord& record);

/// include count -> number of domains.
std::map<int, std::uint64_t> top_level_include_histogram(std::span<const int> per_domain_counts);

struct PermissivenessFlags {
  bool no_restrictive_all = false;
  bool plus_all = false;
  std::vector<int> huge_cidr_direct;
  std::vector<int> huge_cidr_via_include;
  bool over_100k_ips = false;
  bool ptr_used = false;
  bool deprecated_spf_rrt = false;
  bool abuse_modifiers_present = false;
  bool markup_suspicious = false;
  /// Near misses of `all` such as "-al" or "-all;".
  std::vector<SyntaxIssue> near_miss_terms;

  bool any() const;
  bool operator==(const PermissivenessFlags&) const = default;
};

constexpr std::uint64_t kManyIpsThreshold = 100000;

PermissivenessFlags permissiveness_flags(std::string_view raw, const ParseResult& lenient,
                                         const ExpansionSummary& expansion, std::optional<Qualifier> final_all,
                                         bool ptr_used, bool spf_rrt_present);

/// Convenience overload over a full report.
PermissivenessFlags permissiveness_flags(std::string_view raw, const ParseResult& lenient,
                                         const ExpansionReport& report, bool spf_rrt_present);

/// Domains for which check_host(client_ip, d) is Pass, sorted by name.
std::vector<std::string> spoofable_domains(const IpAddress& client_ip, std::span<const std::string> domains,
                                           Resolver& resolver);

}  // namespace spfaudit

#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spfaudit/analysis.hpp"
#include "spfaudit/dmarc.hpp"
#include "spfaudit/dns.hpp"
#include "spfaudit/errors.hpp"
#include "spfaudit/eval.hpp"
#include "spfaudit/parser.hpp"

namespace spfaudit {

inline constexpr const char* kSchemaVersion = "spf-audit/1";

// ---------------------------------------------------------------------------
// Domain lists

struct DomainEntry {
  std::optional<std::uint64_t> rank;
  std::string domain;

  bool operator==(const DomainEntry&) const = default;
};

enum class ListFormat { TrancoCsv, Plain };

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Duplicates keep the lowest rank; output is ordered by rank, then input order.
std::vector<DomainEntry> load_domain_list(std::istream& in, ListFormat format);

// ---------------------------------------------------------------------------
// Audits

struct SpfSection {
  std::string raw;
  ParseStatus status = ParseStatus::NotSpf;
  std::vector<SyntaxIssue> errors;
  std::vector<SyntaxIssue> warnings;

  bool operator==(const SpfSection&) const = default;
};

struct DomainAudit {
  std::string domain;
  std::optional<std::uint64_t> rank;
  bool mx_present = false;
  std::optional<SpfSection> spf;
  /// Why the top-level TXT lookup produced no usable record.
  std::optional<NotFoundCause> spf_absent_cause;
  std::vector<ErrorClass> errors;
  std::vector<std::string> warnings;
  /// A timeout or SERVFAIL was met; kept out of the error histogram.
  bool dns_error = false;
  std::optional<ExpansionSummary> expansion;
  PermissivenessFlags flags;
  DmarcStatus dmarc;
  bool deny_all_only = false;

  /// Publishes SPF text: one record, or several / undecodable ones.
  bool publishes_spf() const;

  bool operator==(const DomainAudit&) const = default;
};

/// Exactly "v=spf1 -all" or "v=spf1 ~all" after normalization.
bool is_deny_all_only(std::string_view raw);

struct ScanOptions {
  int concurrency = 1;
  double qps = 0;                  // <= 0: unlimited
  std::size_t cache_capacity = 0;  // DNS answer cache; 0 disables
  bool record_cache = true;        // share analysis between identical records
  ExpandLimits expand;
  EvalLimits eval;
  bool check_spf_rrt = true;
};

struct ScanStats {
  std::uint64_t audited = 0;
  std::uint64_t record_cache_hits = 0;
  std::uint64_t record_cache_misses = 0;
  CacheStats dns_cache;
};

using AuditSink = std::function<void(DomainAudit)>;

/// Audits every entry on a pool of `concurrency` workers. `sink` is called
/// once per domain as audits complete, serialized by the scanner.
ScanStats scan(const std::vector<DomainEntry>& entries, ResolverPtr resolver, const ScanOptions& options,
               const AuditSink& sink);

/// Collects the audits, sorted by domain.
std::vector<DomainAudit> scan_all(const std::vector<DomainEntry>& entries, ResolverPtr resolver,
                                  const ScanOptions& options, ScanStats* stats = nullptr);

/// Single-domain audit without any caching.
DomainAudit audit_domain(const DomainEntry& entry, Resolver& resolver, const ScanOptions& options = {});

// ---------------------------------------------------------------------------
// Aggregation

struct CorpusTotals {
  std::uint64_t scanned = 0;
  std::uint64_t with_mx = 0;
  std::uint64_t with_spf = 0;
  std::uint64_t with_dmarc = 0;
  std::uint64_t spf_without_mx = 0;
  std::uint64_t deny_all_without_mx = 0;
  std::uint64_t with_errors = 0;
  std::uint64_t dns_errors = 0;
  std::uint64_t with_expansion = 0;

  bool operator==(const CorpusTotals&) const = default;
};

struct CdfPoint {
  std::uint64_t ip_count = 0;
  double fraction = 0;

  bool operator==(const CdfPoint&) const = default;
};

struct CorpusStats {
  CorpusTotals totals;
  double spf_adoption = 0;
  double dmarc_adoption = 0;
  /// Error class -> domains with at least one error of that class.
  std::map<std::string, std::uint64_t> error_histogram;
  /// Error class -> subtype -> domains.
  std::map<std::string, std::map<std::string, std::uint64_t>> error_subtypes;
  std::vector<CdfPoint> cdf;
  std::vector<RankedInclude> top_includes;
  std::map<int, std::uint64_t> top_level_include_histogram;
  std::map<int, std::uint64_t> subnet_size_histogram;
  LargeCidrs large_cidr_table;

  bool operator==(const CorpusStats&) const = default;
};

CorpusStats aggregate(const std::vector<DomainAudit>& audits);

/// Empirical CDF: one point per distinct count.
std::vector<CdfPoint> empirical_cdf(std::vector<std::uint64_t> counts);

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { Jsonl, Json, CsvTables };

class ReportIoError : public std::runtime_error {
 public:
  ReportIoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// One audit per line, sorted by domain.
void write_jsonl(std::ostream& out, const std::vector<DomainAudit>& audits);
void write_stats_json(std::ostream& out, const CorpusStats& stats);
void write_top_includes_csv(std::ostream& out, const CorpusStats& stats);
void write_large_cidrs_csv(std::ostream& out, const CorpusStats& stats);

/// Jsonl and Json write the file at `path`; CsvTables treats `path` as a
/// directory and writes top_includes.csv and large_cidrs.csv into it.
void emit_report(const CorpusStats& stats, const std::vector<DomainAudit>& audits, ReportFormat format,
                 const std::string& path);

/// Reads audits back; ParseError carries the line number.
std::vector<DomainAudit> read_jsonl(std::istream& in);

std::string audit_to_json_line(const DomainAudit& audit);
DomainAudit audit_from_json_line(const std::string& line);

/// Per-domain findings with quoted spans and fixes; nullopt when the audit
/// has no error and no flag.
std::optional<std::string> remediation_text(const DomainAudit& audit);

}  // namespace spfaudit

#include "spfaudit/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <future>
#include <set>
#include <thread>
#include <unordered_map>

#include "spfaudit/eval.hpp"

namespace spfaudit {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string checked_domain(std::string_view text, std::size_t line) {
  auto d = normalize_name(trim(text));
  if (d.empty()) throw ParseError(line, "empty domain");
  for (unsigned char c : d)
    if (std::isspace(c) || std::iscntrl(c) || c == ',' || c == '"') throw ParseError(line, "invalid domain '" + d + "'");
  return d;
}

}  // namespace

std::vector<DomainEntry> load_domain_list(std::istream& in, ListFormat format) {
  std::vector<DomainEntry> entries;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    DomainEntry e;
    if (format == ListFormat::TrancoCsv) {
      auto comma = text.find(',');
      if (comma == std::string_view::npos) throw ParseError(lineno, "expected 'rank,domain'");
      auto rank_text = trim(text.substr(0, comma));
      std::uint64_t rank = 0;
      auto [ptr, ec] = std::from_chars(rank_text.data(), rank_text.data() + rank_text.size(), rank);
      if (ec != std::errc{} || ptr != rank_text.data() + rank_text.size() || rank == 0) {
        if (entries.empty() && lineno == 1 && normalize_name(rank_text) == "rank") continue;  // header
        throw ParseError(lineno, "invalid rank '" + std::string(rank_text) + "'");
      }
      e.rank = rank;
      e.domain = checked_domain(text.substr(comma + 1), lineno);
    } else {
      e.domain = checked_domain(text, lineno);
    }
    if (auto it = index.find(e.domain); it != index.end()) {
      auto& kept = entries[it->second];
      if (e.rank && (!kept.rank || *e.rank < *kept.rank)) kept.rank = e.rank;
      continue;
    }
    index.emplace(e.domain, entries.size());
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(), [](const DomainEntry& a, const DomainEntry& b) {
    if (a.rank && b.rank) return *a.rank < *b.rank;
    return a.rank.has_value() && !b.rank.has_value();
  });
  return entries;
}

bool DomainAudit::publishes_spf() const {
  return spf.has_value() || spf_absent_cause == NotFoundCause::MultipleRecords ||
         spf_absent_cause == NotFoundCause::DecodeError;
}

bool is_deny_all_only(std::string_view raw) {
  auto parsed = parse_spf(raw, ParseMode::Strict);
  if (!parsed.ok() || parsed.record->terms.size() != 1) return false;
  const auto* d = parsed.record->terms.front().directive();
  return d && std::holds_alternative<mech::All>(d->mechanism) &&
         (d->qualifier == Qualifier::Fail || d->qualifier == Qualifier::SoftFail);
}

// ---------------------------------------------------------------------------
// Per-record analysis

namespace {

/// Everything derived from one SPF text at one domain.
struct RecordAnalysis {
  std::string domain;
  ParseResult lenient;
  std::vector<ErrorClass> errors;
  std::vector<std::string> warnings;
  bool dns_error = false;
  std::optional<ExpansionSummary> expansion;
  std::optional<Qualifier> final_all;
  bool ptr_used = false;
  std::set<std::string> reached;  // include/redirect targets
  bool shareable = false;
};

/// Results depend on the evaluated domain itself.
bool domain_relative(const SpfRecord& rec) {
  for (const auto& t : rec.terms) {
    if (const auto* m = t.modifier()) {
      if ((m->name == "redirect" || m->name == "exp") && has_macro(m->value)) return true;
      continue;
    }
    const auto& mech = t.directive()->mechanism;
    if (const auto* a = std::get_if<mech::A>(&mech)) {
      if (!a->domain || has_macro(*a->domain)) return true;
    } else if (const auto* mx = std::get_if<mech::Mx>(&mech)) {
      if (!mx->domain || has_macro(*mx->domain)) return true;
    } else if (const auto* p = std::get_if<mech::Ptr>(&mech)) {
      if (!p->domain || has_macro(*p->domain)) return true;
    } else if (const auto* i = std::get_if<mech::Include>(&mech)) {
      if (has_macro(i->domain)) return true;
    } else if (const auto* e = std::get_if<mech::Exists>(&mech)) {
      if (has_macro(e->domain)) return true;
    }
  }
  return false;
}

bool add_error(std::vector<ErrorClass>& errors, ErrorClass e) {
  for (const auto& have : errors)
    if (have.kind == e.kind) return false;
  errors.push_back(std::move(e));
  return true;
}

RecordAnalysis analyze_record(const std::string& domain, const std::string& raw, Resolver& resolver,
                              const ScanOptions& options, IncludeCounter* counter) {
  RecordAnalysis a;
  a.domain = domain;
  a.lenient = parse_spf(raw, ParseMode::Lenient);
  a.errors = classify_parse_errors(a.lenient.errors, domain);
  if (!a.lenient.record) return a;
  const auto& rec = *a.lenient.record;

  if (auto loop = detect_loops(domain, resolver, options.expand.max_depth)) add_error(a.errors, std::move(*loop));
  auto dry = dry_run(domain, rec, resolver, options.eval);
  if (dry.error) {
    if (dry.error->kind == ErrorKind::RecordNotFound && dry.error->cause == NotFoundCause::DnsError) {
      a.dns_error = true;
    } else {
      add_error(a.errors, std::move(*dry.error));
    }
  }
  for (auto& w : dry.trace.warnings)
    if (std::find(a.warnings.begin(), a.warnings.end(), w) == a.warnings.end()) a.warnings.push_back(std::move(w));

  auto report = expand_record(domain, rec, resolver, options.expand, counter);
  if (report.truncated) a.warnings.push_back("expansion truncated: " + report.truncated_reason);
  a.final_all = report.final_all;
  a.ptr_used = report.ptr_used;
  a.expansion = summarize(report);
  for (const auto& e : report.edges) a.reached.insert(e.to);
  a.shareable = !domain_relative(rec) && !report.truncated && !a.reached.count(domain);
  return a;
}

/// Moves analysis computed at `from` onto `to`.
RecordAnalysis rebase(RecordAnalysis a, const std::string& to) {
  if (a.domain == to) return a;
  for (auto& e : a.errors)
    if (e.domain == a.domain) e.domain = to;
  if (a.expansion)
    for (auto& e : a.expansion->edges)
      if (e.from == a.domain) e.from = to;
  a.domain = to;
  return a;
}

bool spf_rrt_present(const std::string& domain, Resolver& resolver) {
  auto answer = resolver.resolve({domain, RrType::SPF});
  if (!answer.has_records()) return false;
  return std::any_of(answer.records.begin(), answer.records.end(), [](const auto& t) { return is_spf_text(t); });
}

using AnalysisPtr = std::shared_ptr<const RecordAnalysis>;

/// Shares analysis between identical record texts. Concurrent requests for
/// the same key wait for the first computation.
class RecordCache {
 public:
  RecordAnalysis get(const std::string& domain, const std::string& raw, Resolver& resolver,
                     const ScanOptions& options, IncludeCounter* counter) {
    auto compute = [&] { return analyze_record(domain, raw, resolver, options, counter); };
    auto parsed = parse_spf(raw, ParseMode::Lenient);
    std::string key = raw;
    if (parsed.record && domain_relative(*parsed.record)) key = domain + '\n' + raw;

    std::promise<AnalysisPtr> promise;
    std::shared_future<AnalysisPtr> future;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      ++misses_;
      try {
        auto result = std::make_shared<const RecordAnalysis>(compute());
        promise.set_value(result);
        return *result;
      } catch (...) {
        promise.set_exception(std::current_exception());
        throw;
      }
    }
    auto cached = future.get();
    if (!cached->shareable || cached->reached.count(domain)) {
      ++misses_;
      return compute();
    }
    ++hits_;
    return rebase(*cached, domain);
  }

  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_future<AnalysisPtr>> entries_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

DomainAudit audit_with(const DomainEntry& entry, Resolver& resolver, const ScanOptions& options,
                       RecordCache* cache, IncludeCounter* counter) {
  DomainAudit audit;
  audit.domain = normalize_name(entry.domain);
  audit.rank = entry.rank;
  const auto& domain = audit.domain;

  auto mx = resolver.resolve({domain, RrType::MX});
  audit.mx_present = mx.has_records();
  if (mx.is_transient()) audit.warnings.push_back("MX lookup failed: " + std::string(dns_status_name(mx.status)));

  const bool rrt = options.check_spf_rrt && spf_rrt_present(domain, resolver);
  auto fetched = fetch_and_classify(domain, resolver);
  if (auto* err = std::get_if<ErrorClass>(&fetched)) {
    audit.spf_absent_cause = err->cause;
    if (err->cause == NotFoundCause::DnsError) {
      audit.dns_error = true;
    } else if (err->cause == NotFoundCause::MultipleRecords || err->cause == NotFoundCause::DecodeError) {
      audit.errors.push_back(*err);
    }
    audit.flags.deprecated_spf_rrt = rrt;
  } else {
    const auto& raw = std::get<FetchedSpf>(fetched).raw;
    auto a = cache ? cache->get(domain, raw, resolver, options, counter)
                   : analyze_record(domain, raw, resolver, options, counter);
    audit.spf = SpfSection{raw, a.lenient.status, a.lenient.errors, a.lenient.warnings};
    audit.errors = std::move(a.errors);
    audit.warnings.insert(audit.warnings.end(), a.warnings.begin(), a.warnings.end());
    audit.dns_error = a.dns_error;
    audit.expansion = std::move(a.expansion);
    if (audit.expansion) {
      audit.flags = permissiveness_flags(raw, a.lenient, *audit.expansion, a.final_all, a.ptr_used, rrt);
    } else {
      audit.flags.deprecated_spf_rrt = rrt;
    }
    audit.deny_all_only = is_deny_all_only(raw);
  }
  audit.dmarc = fetch_dmarc(domain, resolver);
  return audit;
}

}  // namespace

DomainAudit audit_domain(const DomainEntry& entry, Resolver& resolver, const ScanOptions& options) {
  IncludeCounter counter;
  return audit_with(entry, resolver, options, nullptr, &counter);
}

ScanStats scan(const std::vector<DomainEntry>& entries, ResolverPtr resolver, const ScanOptions& options,
               const AuditSink& sink) {
  ResolverPtr stack = std::move(resolver);
  if (options.qps > 0) stack = with_rate_limit(stack, options.qps);
  std::shared_ptr<CachingResolver> dns_cache;
  if (options.cache_capacity > 0) {
    dns_cache = with_cache(stack, options.cache_capacity);
    stack = dns_cache;
  }

  RecordCache record_cache;
  IncludeCounter counter;
  std::atomic<std::size_t> next{0};
  std::mutex sink_mu;
  std::uint64_t audited = 0;

  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      auto audit = audit_with(entries[i], *stack, options, options.record_cache ? &record_cache : nullptr, &counter);
      std::lock_guard lock(sink_mu);
      ++audited;
      if (sink) sink(std::move(audit));
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, options.concurrency));
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < std::min(n, std::max<std::size_t>(1, entries.size())); ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  ScanStats stats;
  stats.audited = audited;
  stats.record_cache_hits = record_cache.hits();
  stats.record_cache_misses = record_cache.misses();
  if (dns_cache) stats.dns_cache = dns_cache->stats();
  return stats;
}

std::vector<DomainAudit> scan_all(const std::vector<DomainEntry>& entries, ResolverPtr resolver,
                                  const ScanOptions& options, ScanStats* stats) {
  std::vector<DomainAudit> audits;
  auto s = scan(entries, std::move(resolver), options, [&](DomainAudit a) { audits.push_back(std::move(a)); });
  std::sort(audits.begin(), audits.end(), [](const auto& a, const auto& b) { return a.domain < b.domain; });
  if (stats) *stats = s;
  return audits;
}

// ---------------------------------------------------------------------------
// Aggregation

std::vector<CdfPoint> empirical_cdf(std::vector<std::uint64_t> counts) {
  std::vector<CdfPoint> out;
  if (counts.empty()) return out;
  std::sort(counts.begin(), counts.end());
  const double n = static_cast<double>(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i + 1 < counts.size() && counts[i + 1] == counts[i]) continue;
    out.push_back({counts[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

CorpusStats aggregate(const std::vector<DomainAudit>& audits) {
  CorpusStats s;
  auto& t = s.totals;
  std::vector<std::uint64_t> counts;
  std::vector<int> top_level;
  std::vector<AuditedExpansion> expansions;
  for (const auto& a : audits) {
    ++t.scanned;
    if (a.mx_present) ++t.with_mx;
    const bool spf = a.publishes_spf();
    if (spf) ++t.with_spf;
    if (a.dmarc.present) ++t.with_dmarc;
    if (spf && !a.mx_present) ++t.spf_without_mx;
    if (a.deny_all_only && !a.mx_present) ++t.deny_all_without_mx;
    if (a.dns_error) ++t.dns_errors;
    if (!a.errors.empty()) ++t.with_errors;

    std::map<std::string, std::set<std::string>> classes;
    for (const auto& e : a.errors) {
      auto& subs = classes[std::string(error_kind_name(e.kind))];
      for (auto& sub : e.subtypes()) subs.insert(std::move(sub));
    }
    for (const auto& [kind, subs] : classes) {
      ++s.error_histogram[kind];
      for (const auto& sub : subs) ++s.error_subtypes[kind][sub];
    }

    if (a.expansion) {
      ++t.with_expansion;
      counts.push_back(a.expansion->v4_count);
      top_level.push_back(a.expansion->top_level_includes);
      expansions.push_back({a.domain, &*a.expansion});
      for (const auto& [prefix, n] : a.expansion->include_subnets) s.subnet_size_histogram[prefix] += n;
      for (const auto& [prefix, n] : a.expansion->large_cidrs.direct) s.large_cidr_table.direct[prefix] += n;
      for (const auto& [prefix, n] : a.expansion->large_cidrs.include) s.large_cidr_table.include[prefix] += n;
    }
  }
  if (t.scanned) {
    s.spf_adoption = static_cast<double>(t.with_spf) / static_cast<double>(t.scanned);
    s.dmarc_adoption = static_cast<double>(t.with_dmarc) / static_cast<double>(t.scanned);
  }
  s.cdf = empirical_cdf(std::move(counts));
  s.top_level_include_histogram = top_level_include_histogram(top_level);
  s.top_includes = top_includes(build_include_graph(expansions));
  return s;
}

}  // namespace spfaudit

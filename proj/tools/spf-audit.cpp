#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spfaudit/analysis.hpp"
#include "spfaudit/corpus.hpp"
#include "spfaudit/eval.hpp"
#include "spfaudit/live_resolver.hpp"

using namespace spfaudit;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitDataErr = 65;
constexpr int kExitIoErr = 74;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  std::string zone;
  std::string resolver;
  bool overlay = false;
  double qps = 0;
  int concurrency = 8;
  std::size_t cache = 10000;
  bool json = false;
  std::string out;
  std::string format;
  bool strict = false;
  bool honor_budget = false;
};

int exit_code(SpfResult r) {
  switch (r) {
    case SpfResult::Pass: return 0;
    case SpfResult::Fail:
    case SpfResult::SoftFail: return 1;
    case SpfResult::Neutral:
    case SpfResult::None: return 2;
    case SpfResult::TempError: return 3;
    case SpfResult::PermError: return 4;
  }
  return 4;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

ZoneFixture load_zone(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open zone file");
  try {
    return load_zone_fixture(in);
  } catch (const ZoneParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

ResolverPtr live_resolver(const Config& cfg) {
  std::string text = cfg.resolver;
  if (text.empty())
    if (const char* env = std::getenv("SPF_AUDIT_RESOLVER")) text = env;
  std::optional<Endpoint> ep;
  if (!text.empty()) {
    ep = Endpoint::parse(text);
    if (!ep) throw UsageError("invalid resolver endpoint '" + text + "'");
  } else {
    ep = system_nameserver();
    if (!ep) throw UsageError("no resolver: pass --resolver, set SPF_AUDIT_RESOLVER or use --zone");
  }
  return std::make_shared<LiveResolver>(*ep);
}

ResolverPtr make_resolver(const Config& cfg) {
  if (cfg.overlay) {
    if (cfg.zone.empty()) throw UsageError("--overlay needs --zone");
    return std::make_shared<OverlayResolver>(load_zone(cfg.zone), live_resolver(cfg));
  }
  if (!cfg.zone.empty()) {
    if (!cfg.resolver.empty()) throw UsageError("--zone and --resolver are exclusive unless --overlay is given");
    return std::make_shared<ZoneResolver>(load_zone(cfg.zone));
  }
  return live_resolver(cfg);
}

/// Stdout when `path` is empty or "-".
void with_output(const std::string& path, const std::function<void(std::ostream&)>& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  write(out);
  out.flush();
  if (!out) throw IoError(path + ": write failed");
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  return in;
}

// ---------------------------------------------------------------------------

int cmd_check(const Config& cfg, const std::string& domain, const std::string& ip_text, const std::string& sender) {
  auto ip = parse_ip(ip_text);
  if (!ip) throw UsageError("invalid IP address '" + ip_text + "'");
  auto resolver = make_resolver(cfg);
  SessionInput input{*ip, sender.empty() ? "postmaster@" + domain : sender, std::nullopt};
  auto out = check_host(input, domain, *resolver);
  const auto& t = out.trace;
  if (cfg.json) {
    json j = {{"schema", kSchemaVersion},
              {"domain", normalize_name(domain)},
              {"ip", to_string(*ip)},
              {"result", lower(spf_result_name(out.result))},
              {"matched", out.matched ? json{{"domain", out.matched->domain}, {"index", out.matched->index}}
                                      : json(nullptr)},
              {"matched_term", out.matched ? json(out.matched_term) : json(nullptr)},
              {"lookups_used", t.lookups_used},
              {"void_lookups_used", t.void_lookups_used},
              {"error", t.error ? json(t.error->label()) : json(nullptr)},
              {"warnings", t.warnings}};
    std::cout << j.dump() << '\n';
  } else {
    std::cout << lower(spf_result_name(out.result));
    if (out.matched) std::cout << " via " << out.matched_term;
    if (t.error) std::cout << ": " << t.error->label();
    std::cout << '\n';
    for (const auto& v : t.visited) std::cout << "  visited " << v.domain << " term " << v.index << '\n';
    std::cout << "  lookups " << t.lookups_used << ", void lookups " << t.void_lookups_used << '\n';
    for (const auto& w : t.warnings) std::cout << "  warning: " << w << '\n';
  }
  return exit_code(out.result);
}

ScanOptions scan_options(const Config& cfg) {
  ScanOptions o;
  o.concurrency = cfg.concurrency;
  o.qps = cfg.qps;
  o.cache_capacity = cfg.cache;
  o.expand.honor_lookup_budget = cfg.honor_budget;
  return o;
}

int cmd_audit(const Config& cfg, const std::string& domain) {
  auto resolver = make_resolver(cfg);
  auto audit = audit_domain({std::nullopt, domain}, *resolver, scan_options(cfg));
  with_output(cfg.out, [&](std::ostream& os) {
    if (cfg.json) {
      os << audit_to_json_line(audit) << '\n';
      return;
    }
    os << audit.domain << '\n';
    os << "  mx: " << (audit.mx_present ? "yes" : "no") << '\n';
    if (audit.spf) {
      os << "  spf: " << audit.spf->raw << '\n';
    } else {
      os << "  spf: none";
      if (audit.spf_absent_cause) os << " (" << not_found_cause_name(*audit.spf_absent_cause) << ')';
      os << '\n';
    }
    if (audit.expansion) os << "  authorized IPv4 addresses: " << audit.expansion->v4_count << '\n';
    os << "  dmarc: " << (audit.dmarc.present ? "yes" : "no");
    if (audit.dmarc.policy) os << " (p=" << dmarc_policy_name(*audit.dmarc.policy) << ')';
    os << '\n';
    if (audit.dns_error) os << "  dns error during audit\n";
    for (const auto& w : audit.warnings) os << "  warning: " << w << '\n';
    if (auto text = remediation_text(audit)) os << '\n' << *text;
  });
  return cfg.strict && !audit.errors.empty() ? 1 : 0;
}

int cmd_expand(const Config& cfg, const std::string& domain) {
  auto resolver = make_resolver(cfg);
  ExpandLimits limits;
  limits.honor_lookup_budget = cfg.honor_budget;
  IncludeCounter counter;
  auto r = expand_authorized_ips(domain, *resolver, limits, &counter);
  with_output(cfg.out, [&](std::ostream& os) {
    if (cfg.json) {
      json cidrs = json::array();
      for (const auto& c : r.ipset.to_cidrs()) cidrs.push_back(c.to_string());
      json v6 = json::array();
      for (const auto& [addr, prefix] : r.ipv6) v6.push_back(addr.to_string() + "/" + std::to_string(prefix));
      json includes = json::array();
      for (const auto& u : r.includes) includes.push_back({{"domain", u.domain}, {"allowed_ips", u.allowed_ips}});
      json j = {{"schema", kSchemaVersion},       {"domain", normalize_name(domain)},
                {"v4_count", count_ips(r.ipset)},  {"cidrs", cidrs},
                {"ipv6", v6},                      {"includes", includes},
                {"unexpandable", r.unexpandable},  {"include_depth_max", r.include_depth_max},
                {"truncated", r.truncated},        {"truncated_reason", r.truncated_reason}};
      os << j.dump() << '\n';
      return;
    }
    os << normalize_name(domain) << ": " << count_ips(r.ipset) << " IPv4 addresses\n";
    for (const auto& c : r.ipset.to_cidrs()) os << "  " << c.to_string() << '\n';
    for (const auto& [addr, prefix] : r.ipv6) os << "  " << addr.to_string() << '/' << prefix << '\n';
    for (const auto& u : r.includes) os << "  include " << u.domain << " (" << u.allowed_ips << ")\n";
    for (const auto& u : r.unexpandable) os << "  unexpandable " << u << '\n';
    if (r.truncated) os << "  truncated: " << r.truncated_reason << '\n';
  });
  return 0;
}

std::vector<DomainEntry> read_list(const std::string& path, const std::string& list_format) {
  auto in = open_input(path);
  ListFormat fmt = ListFormat::Plain;
  if (list_format == "tranco" || (list_format.empty() && path.ends_with(".csv"))) fmt = ListFormat::TrancoCsv;
  try {
    return load_domain_list(in, fmt);
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::vector<DomainAudit> read_audits(const std::string& path) {
  auto in = open_input(path);
  try {
    return read_jsonl(in);
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

int cmd_scan(const Config& cfg, const std::string& list, const std::string& list_format) {
  auto entries = read_list(list, list_format);
  auto resolver = make_resolver(cfg);
  ScanStats stats;
  auto audits = scan_all(entries, resolver, scan_options(cfg), &stats);
  const std::string out = cfg.out.empty() ? "audits.jsonl" : cfg.out;
  const std::string format = cfg.format.empty() ? "jsonl" : cfg.format;
  if (format == "jsonl") {
    with_output(out, [&](std::ostream& os) { write_jsonl(os, audits); });
  } else if (format == "json") {
    with_output(out, [&](std::ostream& os) { write_stats_json(os, aggregate(audits)); });
  } else {
    emit_report(aggregate(audits), audits, ReportFormat::CsvTables, out);
  }
  std::cerr << "scanned " << stats.audited << " domains, record cache hits " << stats.record_cache_hits
            << ", dns cache hits " << stats.dns_cache.hits << '\n';
  if (cfg.strict)
    for (const auto& a : audits)
      if (!a.errors.empty()) return 1;
  return 0;
}

int cmd_stats(const Config& cfg, const std::string& path) {
  auto audits = read_audits(path);
  auto stats = aggregate(audits);
  const std::string format = cfg.format.empty() ? "json" : cfg.format;
  if (format == "csv") {
    emit_report(stats, audits, ReportFormat::CsvTables, cfg.out.empty() ? "tables" : cfg.out);
  } else if (format == "jsonl") {
    with_output(cfg.out, [&](std::ostream& os) { write_jsonl(os, audits); });
  } else {
    with_output(cfg.out, [&](std::ostream& os) { write_stats_json(os, stats); });
  }
  return 0;
}

int cmd_spoofable(const Config& cfg, const std::string& ip_text, const std::string& source) {
  auto ip = parse_ip(ip_text);
  if (!ip) throw UsageError("invalid IP address '" + ip_text + "'");
  std::vector<std::string> domains;
  if (source.ends_with(".jsonl")) {
    for (const auto& a : read_audits(source)) domains.push_back(a.domain);
  } else {
    for (const auto& e : read_list(source, "")) domains.push_back(e.domain);
  }
  auto resolver = make_resolver(cfg);
  auto found = spoofable_domains(*ip, domains, *resolver);
  with_output(cfg.out, [&](std::ostream& os) {
    if (cfg.json) {
      os << json{{"schema", kSchemaVersion}, {"ip", to_string(*ip)}, {"domains", found}}.dump() << '\n';
    } else {
      for (const auto& d : found) os << d << '\n';
    }
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPF policy parser, evaluator and auditor"};
  app.require_subcommand(1);
  app.fallthrough();
  Config cfg;
  app.add_option("--zone", cfg.zone, "Zone fixture file used instead of live DNS");
  app.add_option("--resolver", cfg.resolver, "Recursive resolver HOST:PORT (env SPF_AUDIT_RESOLVER)");
  app.add_flag("--overlay", cfg.overlay, "Answer from --zone first, then from the live resolver");
  app.add_option("--qps", cfg.qps, "Query rate limit")->check(CLI::PositiveNumber);
  app.add_option("--concurrency", cfg.concurrency, "Scan workers")->check(CLI::Range(1, 1024));
  app.add_option("--cache", cfg.cache, "DNS cache capacity (0 disables)");
  app.add_flag("--json", cfg.json, "JSON output");
  app.add_option("--out", cfg.out, "Output path");
  app.add_option("--format", cfg.format, "Report format")->check(CLI::IsMember({"jsonl", "json", "csv"}));
  app.add_flag("--strict", cfg.strict, "Exit 1 when audits report errors");
  app.add_flag("--honor-budget", cfg.honor_budget, "Stop expansion at the 10-lookup budget");

  std::string domain, ip, sender, list, list_format, path;
  auto* check = app.add_subcommand("check", "Evaluate check_host for a client IP");
  check->add_option("domain", domain)->required();
  check->add_option("ip", ip)->required();
  check->add_option("--sender", sender, "MAIL FROM address");

  auto* audit = app.add_subcommand("audit", "Audit one domain");
  audit->add_option("domain", domain)->required();

  auto* expand = app.add_subcommand("expand", "List the IPv4 addresses a policy authorizes");
  expand->add_option("domain", domain)->required();

  auto* scan_cmd = app.add_subcommand("scan", "Audit a domain list");
  scan_cmd->add_option("list", list)->required();
  scan_cmd->add_option("--list-format", list_format, "tranco or plain (default by extension)")
      ->check(CLI::IsMember({"tranco", "plain"}));

  auto* stats = app.add_subcommand("stats", "Aggregate an audits.jsonl without network");
  stats->add_option("audits", path)->required();

  auto* spoof = app.add_subcommand("spoofable", "Domains for which an IP passes SPF");
  spoof->add_option("ip", ip)->required();
  spoof->add_option("domains", path, "audits.jsonl or a domain list")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (*check) return cmd_check(cfg, domain, ip, sender);
    if (*audit) return cmd_audit(cfg, domain);
    if (*expand) return cmd_expand(cfg, domain);
    if (*scan_cmd) return cmd_scan(cfg, list, list_format);
    if (*stats) return cmd_stats(cfg, path);
    if (*spoof) return cmd_spoofable(cfg, ip, path);
  } catch (const UsageError& e) {
    std::cerr << "spf-audit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "spf-audit: " << e.what() << '\n';
    return kExitDataErr;
  } catch (const IoError& e) {
    std::cerr << "spf-audit: " << e.what() << '\n';
    return kExitIoErr;
  } catch (const ReportIoError& e) {
    std::cerr << "spf-audit: " << e.what() << '\n';
    return kExitIoErr;
  }
  return kExitUsage;
}

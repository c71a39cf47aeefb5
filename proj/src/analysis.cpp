#include "spfaudit/analysis.hpp"

#include <algorithm>
#include <set>

#include "spfaudit/eval.hpp"

namespace spfaudit {

namespace {

class Expander {
 public:
  Expander(Resolver& resolver, const ExpandLimits& limits) : resolver_(resolver), limits_(limits) {}

  ExpansionReport run(const std::string& domain, const SpfRecord* top) {
    visited_.insert(domain);
    if (top) {
      report_.top_level_includes = count_top_level_includes(*top);
      walk(domain, *top, Provenance::Direct, 0, true);
    } else if (auto rec = fetch(domain)) {
      report_.top_level_includes = count_top_level_includes(*rec);
      walk(domain, *rec, Provenance::Direct, 0, true);
    }
    std::sort(included_.begin(), included_.end());
    for (auto& d : included_) report_.includes.push_back({d, 0});
    return std::move(report_);
  }

 private:
  std::optional<SpfRecord> fetch(const std::string& domain) {
    auto fetched = fetch_and_classify(domain, resolver_);
    if (auto* err = std::get_if<ErrorClass>(&fetched)) {
      report_.unexpandable.push_back(domain + ": " + err->label());
      return std::nullopt;
    }
    auto parsed = parse_spf(std::get<FetchedSpf>(fetched).raw, ParseMode::Lenient);
    return std::move(parsed.record);
  }

  void truncate(std::string reason) {
    if (!report_.truncated) report_.truncated_reason = std::move(reason);
    report_.truncated = true;
  }

  /// Returns false once the lookup budget is exhausted.
  bool spend_lookup() {
    ++lookups_;
    if (limits_.honor_lookup_budget && lookups_ > limits_.max_lookups) {
      truncate("lookup budget exceeded");
      stopped_ = true;
      return false;
    }
    return true;
  }

  void contribute(const std::string& origin, const Term& term, Cidr4 cidr, Provenance prov) {
    report_.ipset.insert(cidr);
    report_.contributions.push_back({render(term), origin, cidr, prov});
  }

  void unexpandable(const std::string& domain, const Term& term) {
    report_.unexpandable.push_back(domain + ": " + render(term));
  }

  /// Follows an include or redirect edge. Loops truncate; diamonds are skipped.
  void follow(const std::string& from, const std::string& to, EdgeKind kind, Provenance prov, int depth,
              bool authorize) {
    report_.edges.push_back({from, to, kind});
    if (kind == EdgeKind::Include && std::find(included_.begin(), included_.end(), to) == included_.end())
      included_.push_back(to);
    if (std::find(chain_.begin(), chain_.end(), to) != chain_.end()) {
      truncate("loop at " + to);
      return;
    }
    if (!visited_.insert(to).second) return;
    if (depth > limits_.max_depth) {
      truncate("depth limit at " + to);
      return;
    }
    report_.include_depth_max = std::max(report_.include_depth_max, depth);
    if (auto rec = fetch(to)) walk(to, *rec, prov, depth, authorize);
  }

  void walk(const std::string& domain, const SpfRecord& rec, Provenance prov, int depth, bool authorize) {
    chain_.push_back(domain);
    for (const auto& term : rec.terms) {
      if (stopped_) break;
      if (const auto* mod = term.modifier()) {
        if (mod->name != "redirect") continue;
        if (!spend_lookup()) break;
        if (has_macro(mod->value)) {
          unexpandable(domain, term);
        } else {
          follow(domain, normalize_name(mod->value), EdgeKind::Redirect, prov, depth, authorize);
        }
        break;
      }
      const auto& d = *term.directive();
      const bool pass = authorize && d.qualifier == Qualifier::Pass;
      if (std::holds_alternative<mech::All>(d.mechanism)) {
        if (pass) contribute(domain, term, Cidr4(Ipv4{0}, 0), prov);
        if (prov == Provenance::Direct && authorize) report_.final_all = d.qualifier;
        break;
      }
      if (counts_lookup(d.mechanism) && !spend_lookup()) break;
      std::visit([&](const auto& m) { expand(domain, term, m, prov, depth, pass, authorize); }, d.mechanism);
    }
    chain_.pop_back();
  }

  void expand(const std::string&, const Term&, const mech::All&, Provenance, int, bool, bool) {}

  void expand(const std::string& domain, const Term& term, const mech::Include& inc, Provenance, int depth, bool pass,
              bool) {
    if (has_macro(inc.domain)) return unexpandable(domain, term);
    follow(domain, normalize_name(inc.domain), EdgeKind::Include, Provenance::Include, depth + 1, pass);
  }

  void expand_hosts(const std::string& domain, const Term& term, const mech::HostSpec& spec, bool mx, Provenance prov,
                    bool pass) {
    if (spec.domain && has_macro(*spec.domain)) return unexpandable(domain, term);
    const std::string target = spec.domain ? normalize_name(*spec.domain) : domain;
    std::vector<std::string> hosts;
    if (mx) {
      auto answer = resolver_.resolve({target, RrType::MX});
      for (const auto& payload : answer.records)
        if (auto parsed = parse_mx(payload); parsed && !parsed->second.empty()) hosts.push_back(parsed->second);
    } else {
      hosts.push_back(target);
    }
    if (!pass) return;
    for (const auto& host : hosts) {
      auto answer = resolver_.resolve({host, RrType::A});
      for (const auto& payload : answer.records)
        if (auto addr = Ipv4::parse(payload)) contribute(domain, term, Cidr4(*addr, spec.cidr4.value_or(32)), prov);
    }
  }

  void expand(const std::string& domain, const Term& term, const mech::A& a, Provenance prov, int, bool pass, bool) {
    expand_hosts(domain, term, a, false, prov, pass);
  }

  void expand(const std::string& domain, const Term& term, const mech::Mx& m, Provenance prov, int, bool pass, bool) {
    expand_hosts(domain, term, m, true, prov, pass);
  }

  void expand(const std::string& domain, const Term& term, const mech::Ptr&, Provenance, int, bool, bool) {
    report_.ptr_used = true;
    unexpandable(domain, term);
  }

  void expand(const std::string& domain, const Term& term, const mech::Exists&, Provenance, int, bool, bool) {
    unexpandable(domain, term);
  }

  void expand(const std::string& domain, const Term& term, const mech::Ip4& ip, Provenance prov, int, bool pass,
              bool) {
    if (pass) contribute(domain, term, Cidr4(ip.addr, ip.prefix), prov);
  }

  void expand(const std::string&, const Term&, const mech::Ip6& ip, Provenance, int, bool pass, bool) {
    if (pass) report_.ipv6.emplace_back(ip.addr, ip.prefix);
  }

  Resolver& resolver_;
  const ExpandLimits& limits_;
  ExpansionReport report_;
  std::vector<std::string> chain_;
  std::set<std::string> visited_;
  std::vector<std::string> included_;
  int lookups_ = 0;
  bool stopped_ = false;
};

void fill_include_counts(ExpansionReport& report, Resolver& resolver, const ExpandLimits& limits,
                         IncludeCounter* counter) {
  IncludeCounter local;
  IncludeCounter& c = counter ? *counter : local;
  for (auto& use : report.includes) use.allowed_ips = c.count(use.domain, resolver, limits);
}

}  // namespace

std::uint64_t IncludeCounter::count(const std::string& domain, Resolver& resolver, const ExpandLimits& limits) {
  {
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(domain); it != memo_.end()) return it->second;
  }
  const std::uint64_t n = Expander(resolver, limits).run(domain, nullptr).ipset.count();
  std::lock_guard lock(mu_);
  return memo_.emplace(domain, n).first->second;
}

ExpansionReport expand_authorized_ips(std::string_view domain, Resolver& resolver, const ExpandLimits& limits,
                                      IncludeCounter* counter) {
  auto report = Expander(resolver, limits).run(normalize_name(domain), nullptr);
  fill_include_counts(report, resolver, limits, counter);
  return report;
}

ExpansionReport expand_record(std::string_view domain, const SpfRecord& record, Resolver& resolver,
                              const ExpandLimits& limits, IncludeCounter* counter) {
  auto report = Expander(resolver, limits).run(normalize_name(domain), &record);
  fill_include_counts(report, resolver, limits, counter);
  return report;
}

std::uint64_t count_ips(const IpSet& set) { return set.count(); }

LargeCidrs flag_large_cidrs(const ExpansionReport& report) {
  LargeCidrs out;
  for (const auto& c : report.contributions) {
    if (c.cidr.prefix() > 16) continue;
    ++(c.provenance == Provenance::Direct ? out.direct : out.include)[c.cidr.prefix()];
  }
  return out;
}

std::map<int, std::uint64_t> subnet_size_distribution(const ExpansionReport& report) {
  std::map<int, std::uint64_t> out;
  for (const auto& c : report.contributions)
    if (c.provenance == Provenance::Include) ++out[c.cidr.prefix()];
  return out;
}

ExpansionSummary summarize(const ExpansionReport& report) {
  ExpansionSummary s;
  s.v4_count = report.ipset.count();
  s.include_depth_max = report.include_depth_max;
  s.top_level_includes = report.top_level_includes;
  s.truncated = report.truncated;
  s.truncated_reason = report.truncated_reason;
  s.unexpandable = report.unexpandable.size();
  s.includes = report.includes;
  s.edges = report.edges;
  s.large_cidrs = flag_large_cidrs(report);
  s.include_subnets = subnet_size_distribution(report);
  return s;
}

IncludeGraph build_include_graph(std::span<const AuditedExpansion> audits) {
  IncludeGraph g;
  std::set<std::string> nodes;
  std::set<std::tuple<std::string, std::string, int>> edges;
  for (const auto& a : audits) {
    if (!a.expansion) continue;
    nodes.insert(a.domain);
    std::set<std::string> reached;
    for (const auto& use : a.expansion->includes) {
      if (reached.insert(use.domain).second) ++g.usage[use.domain];
      auto& best = g.allowed_ips[use.domain];
      best = std::max(best, use.allowed_ips);
      nodes.insert(use.domain);
    }
    for (const auto& e : a.expansion->edges) {
      nodes.insert(e.from);
      nodes.insert(e.to);
      edges.insert({e.from, e.to, static_cast<int>(e.kind)});
    }
  }
  g.nodes.assign(nodes.begin(), nodes.end());
  for (const auto& [from, to, kind] : edges) g.edges.push_back({from, to, static_cast<EdgeKind>(kind)});
  return g;
}

std::vector<RankedInclude> top_includes(const IncludeGraph& graph, std::size_t n) {
  std::vector<RankedInclude> out;
  for (const auto& [domain, used] : graph.usage) {
    auto it = graph.allowed_ips.find(domain);
    out.push_back({domain, used, it == graph.allowed_ips.end() ? 0 : it->second});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.used_by != b.used_by) return a.used_by > b.used_by;
    return a.domain < b.domain;
  });
  if (n && out.size() > n) out.resize(n);
  return out;
}

int count_top_level_includes(const SpfRecord& record) {
  int n = 0;
  for (const auto& t : record.terms)
    if (const auto* d = t.directive(); d && std::holds_alternative<mech::Include>(d->mechanism)) ++n;
  return n;
}

std::map<int, std::uint64_t> top_level_include_histogram(std::span<const int> per_domain_counts) {
  std::map<int, std::uint64_t> out;
  for (int c : per_domain_counts) ++out[c];
  return out;
}

bool PermissivenessFlags::any() const {
  return no_restrictive_all || plus_all || !huge_cidr_direct.empty() || !huge_cidr_via_include.empty() ||
         over_100k_ips || ptr_used || deprecated_spf_rrt || abuse_modifiers_present || markup_suspicious ||
         !near_miss_terms.empty();
}

PermissivenessFlags permissiveness_flags(std::string_view raw, const ParseResult& lenient,
                                         const ExpansionSummary& expansion, std::optional<Qualifier> final_all,
                                         bool ptr_used, bool spf_rrt_present) {
  PermissivenessFlags f;
  f.no_restrictive_all = !final_all || (*final_all != Qualifier::Fail && *final_all != Qualifier::SoftFail);
  f.plus_all = final_all == Qualifier::Pass;
  for (const auto& [prefix, n] : expansion.large_cidrs.direct) f.huge_cidr_direct.insert(f.huge_cidr_direct.end(), n, prefix);
  for (const auto& [prefix, n] : expansion.large_cidrs.include)
    f.huge_cidr_via_include.insert(f.huge_cidr_via_include.end(), n, prefix);
  f.over_100k_ips = expansion.v4_count > kManyIpsThreshold;
  f.ptr_used = ptr_used;
  f.deprecated_spf_rrt = spf_rrt_present;
  if (lenient.record) {
    for (const auto& t : lenient.record->terms)
      if (const auto* m = t.modifier(); m && (m->name == "ra" || m->name == "rp" || m->name == "rr"))
        f.abuse_modifiers_present = true;
  }
  f.markup_suspicious = detect_embedded_markup(raw);
  for (const auto& e : lenient.errors) {
    if (e.kind != SyntaxErrorKind::UnknownTerm) continue;
    std::string token(e.span.slice(raw));
    for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!token.empty() && std::string_view("+-~?").find(token[0]) != std::string_view::npos) token.erase(0, 1);
    if (token.starts_with("al") && token != "all") f.near_miss_terms.push_back(e);
  }
  return f;
}

PermissivenessFlags permissiveness_flags(std::string_view raw, const ParseResult& lenient,
                                         const ExpansionReport& report, bool spf_rrt_present) {
  return permissiveness_flags(raw, lenient, summarize(report), report.final_all, report.ptr_used, spf_rrt_present);
}

std::vector<std::string> spoofable_domains(const IpAddress& client_ip, std::span<const std::string> domains,
                                           Resolver& resolver) {
  std::vector<std::string> out;
  for (const auto& d : domains) {
    SessionInput input{client_ip, {}, std::nullopt};
    if (check_host(input, d, resolver).result == SpfResult::Pass) out.push_back(normalize_name(d));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace spfaudit

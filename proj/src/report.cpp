#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "spfaudit/corpus.hpp"

namespace spfaudit {

using nlohmann::json;

namespace {

template <class E, class F>
E enum_from(const json& j, F from_name, const char* what) {
  auto name = j.get<std::string>();
  if (auto v = from_name(name)) return *v;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + name + "'");
}

std::optional<ParseStatus> parse_status_from_name(std::string_view name) {
  if (name == "Ok") return ParseStatus::Ok;
  if (name == "Invalid") return ParseStatus::Invalid;
  if (name == "NotSpf") return ParseStatus::NotSpf;
  return std::nullopt;
}

std::string_view parse_status_name(ParseStatus s) {
  switch (s) {
    case ParseStatus::Ok: return "Ok";
    case ParseStatus::Invalid: return "Invalid";
    case ParseStatus::NotSpf: return "NotSpf";
  }
  return "NotSpf";
}

std::optional<EdgeKind> edge_kind_from_name(std::string_view name) {
  if (name == "include") return EdgeKind::Include;
  if (name == "redirect") return EdgeKind::Redirect;
  return std::nullopt;
}

json issue_json(const SyntaxIssue& i) {
  return {{"kind", syntax_error_name(i.kind)}, {"span", {i.span.begin, i.span.end}}, {"detail", i.detail}};
}

SyntaxIssue issue_from(const json& j) {
  SyntaxIssue i;
  i.kind = enum_from<SyntaxErrorKind>(j.at("kind"), syntax_error_from_name, "syntax kind");
  i.span.begin = j.at("span").at(0).get<std::size_t>();
  i.span.end = j.at("span").at(1).get<std::size_t>();
  i.detail = j.at("detail").get<std::string>();
  return i;
}

json issues_json(const std::vector<SyntaxIssue>& v) {
  json out = json::array();
  for (const auto& i : v) out.push_back(issue_json(i));
  return out;
}

std::vector<SyntaxIssue> issues_from(const json& j) {
  std::vector<SyntaxIssue> out;
  for (const auto& i : j) out.push_back(issue_from(i));
  return out;
}

json error_json(const ErrorClass& e) {
  return {{"kind", error_kind_name(e.kind)}, {"cause", not_found_cause_name(e.cause)},
          {"issues", issues_json(e.issues)},  {"depth", e.depth},
          {"domain", e.domain},               {"detail", e.detail},
          {"label", e.label()}};
}

ErrorClass error_from(const json& j) {
  ErrorClass e;
  e.kind = enum_from<ErrorKind>(j.at("kind"), error_kind_from_name, "error kind");
  e.cause = enum_from<NotFoundCause>(j.at("cause"), not_found_cause_from_name, "cause");
  e.issues = issues_from(j.at("issues"));
  e.depth = j.at("depth").get<int>();
  e.domain = j.at("domain").get<std::string>();
  e.detail = j.at("detail").get<std::string>();
  return e;
}

json int_map_json(const std::map<int, std::uint64_t>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = v;
  return out;
}

std::map<int, std::uint64_t> int_map_from(const json& j) {
  std::map<int, std::uint64_t> out;
  for (const auto& [k, v] : j.items()) out[std::stoi(k)] = v.get<std::uint64_t>();
  return out;
}

json large_json(const LargeCidrs& l) { return {{"direct", int_map_json(l.direct)}, {"include", int_map_json(l.include)}}; }

LargeCidrs large_from(const json& j) { return {int_map_from(j.at("direct")), int_map_from(j.at("include"))}; }

json expansion_json(const ExpansionSummary& s) {
  json includes = json::array();
  for (const auto& u : s.includes) includes.push_back({{"domain", u.domain}, {"allowed_ips", u.allowed_ips}});
  json edges = json::array();
  for (const auto& e : s.edges)
    edges.push_back({{"from", e.from}, {"to", e.to}, {"kind", e.kind == EdgeKind::Include ? "include" : "redirect"}});
  return {{"v4_count", s.v4_count},
          {"include_depth_max", s.include_depth_max},
          {"top_level_includes", s.top_level_includes},
          {"truncated", s.truncated},
          {"truncated_reason", s.truncated_reason},
          {"unexpandable", s.unexpandable},
          {"includes", includes},
          {"edges", edges},
          {"large_cidrs", large_json(s.large_cidrs)},
          {"include_subnets", int_map_json(s.include_subnets)}};
}

ExpansionSummary expansion_from(const json& j) {
  ExpansionSummary s;
  s.v4_count = j.at("v4_count").get<std::uint64_t>();
  s.include_depth_max = j.at("include_depth_max").get<int>();
  s.top_level_includes = j.at("top_level_includes").get<int>();
  s.truncated = j.at("truncated").get<bool>();
  s.truncated_reason = j.at("truncated_reason").get<std::string>();
  s.unexpandable = j.at("unexpandable").get<std::size_t>();
  for (const auto& u : j.at("includes"))
    s.includes.push_back({u.at("domain").get<std::string>(), u.at("allowed_ips").get<std::uint64_t>()});
  for (const auto& e : j.at("edges"))
    s.edges.push_back({e.at("from").get<std::string>(), e.at("to").get<std::string>(),
                       enum_from<EdgeKind>(e.at("kind"), edge_kind_from_name, "edge kind")});
  s.large_cidrs = large_from(j.at("large_cidrs"));
  s.include_subnets = int_map_from(j.at("include_subnets"));
  return s;
}

json flags_json(const PermissivenessFlags& f) {
  return {{"no_restrictive_all", f.no_restrictive_all},
          {"plus_all", f.plus_all},
          {"huge_cidr_direct", f.huge_cidr_direct},
          {"huge_cidr_via_include", f.huge_cidr_via_include},
          {"over_100k_ips", f.over_100k_ips},
          {"ptr_used", f.ptr_used},
          {"deprecated_spf_rrt", f.deprecated_spf_rrt},
          {"abuse_modifiers_present", f.abuse_modifiers_present},
          {"markup_suspicious", f.markup_suspicious},
          {"near_miss_terms", issues_json(f.near_miss_terms)}};
}

PermissivenessFlags flags_from(const json& j) {
  PermissivenessFlags f;
  f.no_restrictive_all = j.at("no_restrictive_all").get<bool>();
  f.plus_all = j.at("plus_all").get<bool>();
  f.huge_cidr_direct = j.at("huge_cidr_direct").get<std::vector<int>>();
  f.huge_cidr_via_include = j.at("huge_cidr_via_include").get<std::vector<int>>();
  f.over_100k_ips = j.at("over_100k_ips").get<bool>();
  f.ptr_used = j.at("ptr_used").get<bool>();
  f.deprecated_spf_rrt = j.at("deprecated_spf_rrt").get<bool>();
  f.abuse_modifiers_present = j.at("abuse_modifiers_present").get<bool>();
  f.markup_suspicious = j.at("markup_suspicious").get<bool>();
  f.near_miss_terms = issues_from(j.at("near_miss_terms"));
  return f;
}

json dmarc_json(const DmarcStatus& d) {
  return {{"present", d.present},
          {"policy", d.policy ? json(dmarc_policy_name(*d.policy)) : json(nullptr)},
          {"raw", d.raw ? json(*d.raw) : json(nullptr)},
          {"warnings", d.warnings}};
}

DmarcStatus dmarc_from(const json& j) {
  DmarcStatus d;
  d.present = j.at("present").get<bool>();
  if (!j.at("policy").is_null()) d.policy = enum_from<DmarcPolicy>(j.at("policy"), dmarc_policy_from_name, "policy");
  if (!j.at("raw").is_null()) d.raw = j.at("raw").get<std::string>();
  d.warnings = j.at("warnings").get<std::vector<std::string>>();
  return d;
}

json audit_json(const DomainAudit& a) {
  json spf = nullptr;
  if (a.spf)
    spf = {{"raw", a.spf->raw},
           {"status", parse_status_name(a.spf->status)},
           {"errors", issues_json(a.spf->errors)},
           {"warnings", issues_json(a.spf->warnings)}};
  json errors = json::array();
  for (const auto& e : a.errors) errors.push_back(error_json(e));
  return {{"schema", kSchemaVersion},
          {"domain", a.domain},
          {"rank", a.rank ? json(*a.rank) : json(nullptr)},
          {"mx_present", a.mx_present},
          {"spf", spf},
          {"spf_absent_cause", a.spf_absent_cause ? json(not_found_cause_name(*a.spf_absent_cause)) : json(nullptr)},
          {"errors", errors},
          {"warnings", a.warnings},
          {"dns_error", a.dns_error},
          {"expansion", a.expansion ? expansion_json(*a.expansion) : json(nullptr)},
          {"flags", flags_json(a.flags)},
          {"dmarc", dmarc_json(a.dmarc)},
          {"deny_all_only", a.deny_all_only}};
}

DomainAudit audit_from(const json& j) {
  if (j.at("schema").get<std::string>() != kSchemaVersion)
    throw std::invalid_argument("unsupported schema '" + j.at("schema").get<std::string>() + "'");
  DomainAudit a;
  a.domain = j.at("domain").get<std::string>();
  if (!j.at("rank").is_null()) a.rank = j.at("rank").get<std::uint64_t>();
  a.mx_present = j.at("mx_present").get<bool>();
  if (const auto& s = j.at("spf"); !s.is_null())
    a.spf = SpfSection{s.at("raw").get<std::string>(),
                       enum_from<ParseStatus>(s.at("status"), parse_status_from_name, "parse status"),
                       issues_from(s.at("errors")), issues_from(s.at("warnings"))};
  if (const auto& c = j.at("spf_absent_cause"); !c.is_null())
    a.spf_absent_cause = enum_from<NotFoundCause>(c, not_found_cause_from_name, "cause");
  for (const auto& e : j.at("errors")) a.errors.push_back(error_from(e));
  a.warnings = j.at("warnings").get<std::vector<std::string>>();
  a.dns_error = j.at("dns_error").get<bool>();
  if (const auto& x = j.at("expansion"); !x.is_null()) a.expansion = expansion_from(x);
  a.flags = flags_from(j.at("flags"));
  a.dmarc = dmarc_from(j.at("dmarc"));
  a.deny_all_only = j.at("deny_all_only").get<bool>();
  return a;
}

json stats_json(const CorpusStats& s) {
  const auto& t = s.totals;
  json cdf = json::array();
  for (const auto& p : s.cdf) cdf.push_back({{"ip_count", p.ip_count}, {"fraction", p.fraction}});
  json top = json::array();
  for (const auto& r : s.top_includes)
    top.push_back({{"include", r.domain}, {"used_by", r.used_by}, {"allowed_ips", r.allowed_ips}});
  return {{"schema", kSchemaVersion},
          {"totals",
           {{"scanned", t.scanned},
            {"with_mx", t.with_mx},
            {"with_spf", t.with_spf},
            {"with_dmarc", t.with_dmarc},
            {"spf_without_mx", t.spf_without_mx},
            {"deny_all_without_mx", t.deny_all_without_mx},
            {"with_errors", t.with_errors},
            {"dns_errors", t.dns_errors},
            {"with_expansion", t.with_expansion}}},
          {"spf_adoption", s.spf_adoption},
          {"dmarc_adoption", s.dmarc_adoption},
          {"error_histogram", s.error_histogram},
          {"error_subtypes", s.error_subtypes},
          {"cdf", cdf},
          {"top_includes", top},
          {"top_level_include_histogram", int_map_json(s.top_level_include_histogram)},
          {"subnet_size_histogram", int_map_json(s.subnet_size_histogram)},
          {"large_cidr_table", large_json(s.large_cidr_table)}};
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportIoError(path, "cannot open for writing");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw ReportIoError(path, "write failed");
}

}  // namespace

std::string audit_to_json_line(const DomainAudit& audit) { return audit_json(audit).dump(-1, ' ', false, json::error_handler_t::replace); }

DomainAudit audit_from_json_line(const std::string& line) { return audit_from(json::parse(line)); }

void write_jsonl(std::ostream& out, const std::vector<DomainAudit>& audits) {
  std::vector<const DomainAudit*> sorted;
  for (const auto& a : audits) sorted.push_back(&a);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->domain < b->domain; });
  for (const auto* a : sorted) out << audit_to_json_line(*a) << '\n';
}

std::vector<DomainAudit> read_jsonl(std::istream& in) {
  std::vector<DomainAudit> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(audit_from_json_line(line));
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

void write_stats_json(std::ostream& out, const CorpusStats& stats) { out << stats_json(stats).dump(2) << '\n'; }

void write_top_includes_csv(std::ostream& out, const CorpusStats& stats) {
  out << "include,used_by,allowed_ips\n";
  for (const auto& r : stats.top_includes) out << r.domain << ',' << r.used_by << ',' << r.allowed_ips << '\n';
}

void write_large_cidrs_csv(std::ostream& out, const CorpusStats& stats) {
  out << "cidr,direct,include\n";
  auto get = [](const std::map<int, std::uint64_t>& m, int p) {
    auto it = m.find(p);
    return it == m.end() ? std::uint64_t{0} : it->second;
  };
  for (int p = 0; p <= 16; ++p)
    out << '/' << p << ',' << get(stats.large_cidr_table.direct, p) << ',' << get(stats.large_cidr_table.include, p)
        << '\n';
}

void emit_report(const CorpusStats& stats, const std::vector<DomainAudit>& audits, ReportFormat format,
                 const std::string& path) {
  switch (format) {
    case ReportFormat::Jsonl: {
      auto out = open_for_write(path);
      write_jsonl(out, audits);
      finish(out, path);
      return;
    }
    case ReportFormat::Json: {
      auto out = open_for_write(path);
      write_stats_json(out, stats);
      finish(out, path);
      return;
    }
    case ReportFormat::CsvTables: {
      std::error_code ec;
      std::filesystem::create_directories(path, ec);
      if (ec) throw ReportIoError(path, ec.message());
      const auto top = (std::filesystem::path(path) / "top_includes.csv").string();
      auto a = open_for_write(top);
      write_top_includes_csv(a, stats);
      finish(a, top);
      const auto large = (std::filesystem::path(path) / "large_cidrs.csv").string();
      auto b = open_for_write(large);
      write_large_cidrs_csv(b, stats);
      finish(b, large);
      return;
    }
  }
}

}  // namespace spfaudit

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spfaudit/corpus.hpp"
#include "test_util.hpp"

using namespace spfaudit;
using spfaudit::testing::zone_from;

namespace {

const std::string kFixtures = SPFAUDIT_FIXTURE_DIR;

std::vector<DomainEntry> corpus_entries() {
  std::ifstream in(kFixtures + "/corpus.csv");
  return load_domain_list(in, ListFormat::TrancoCsv);
}

ResolverPtr corpus_resolver() { return std::make_shared<ZoneResolver>(load_zone_fixture_file(kFixtures + "/zone.txt")); }

const DomainAudit& find(const std::vector<DomainAudit>& audits, const std::string& domain) {
  auto it = std::find_if(audits.begin(), audits.end(), [&](const auto& a) { return a.domain == domain; });
  REQUIRE(it != audits.end());
  return *it;
}

std::string jsonl(const std::vector<DomainAudit>& audits) {
  std::ostringstream out;
  write_jsonl(out, audits);
  return out.str();
}

}  // namespace

TEST_CASE("load_domain_list") {
  std::istringstream two("1,example.com\n2,example.org\n");
  auto e = load_domain_list(two, ListFormat::TrancoCsv);
  REQUIRE(e.size() == 2);
  CHECK(e[0] == DomainEntry{1, "example.com"});

  std::istringstream dup("9,b.test\n5,a.test\n7,B.test.\n5,c.test\n");
  auto merged = load_domain_list(dup, ListFormat::TrancoCsv);
  REQUIRE(merged.size() == 3);
  CHECK(merged[0] == DomainEntry{5, "a.test"});
  CHECK(merged[1] == DomainEntry{5, "c.test"});
  CHECK(merged[2] == DomainEntry{7, "b.test"});

  std::istringstream later_better("5,a.test\n9,a.test\n");
  CHECK(load_domain_list(later_better, ListFormat::TrancoCsv).front().rank == 5u);

  std::istringstream plain("a.test\n\n# note\nB.test\na.test\n");
  auto p = load_domain_list(plain, ListFormat::Plain);
  REQUIRE(p.size() == 2);
  CHECK(p[1] == DomainEntry{std::nullopt, "b.test"});

  std::istringstream bad("1,a.test\nx,b.test\n");
  try {
    load_domain_list(bad, ListFormat::TrancoCsv);
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.line() == 2);
  }
  std::istringstream zero("0,a.test\n");
  CHECK_THROWS_AS(load_domain_list(zero, ListFormat::TrancoCsv), ParseError);
  std::istringstream nocomma("1 a.test\n");
  CHECK_THROWS_AS(load_domain_list(nocomma, ListFormat::TrancoCsv), ParseError);
  std::istringstream space("a b.test\n");
  CHECK_THROWS_AS(load_domain_list(space, ListFormat::Plain), ParseError);

  CHECK(corpus_entries().size() == 20);
}

TEST_CASE("deny-all-only records") {
  CHECK(is_deny_all_only("v=spf1 -all"));
  CHECK(is_deny_all_only("V=SPF1   ~ALL "));
  CHECK_FALSE(is_deny_all_only("v=spf1 ?all"));
  CHECK_FALSE(is_deny_all_only("v=spf1 mx -all"));
  CHECK_FALSE(is_deny_all_only("v=spf1 -all extra"));
}

TEST_CASE("single-domain audits") {
  auto zone = zone_from(R"(
deny.test TXT "v=spf1 -all"
rrt.test  TXT "v=spf1 ip4:192.0.2.0/24 -all"
rrt.test  SPF "v=spf1 ip4:192.0.2.0/24 -all"
two.test  TXT "v=spf1 -all"
two.test  TXT "v=spf1 ~all"
)");
  ZoneResolver r(zone);

  auto none = audit_domain({std::nullopt, "nothing.test"}, r);
  CHECK_FALSE(none.spf);
  CHECK_FALSE(none.mx_present);
  CHECK(none.spf_absent_cause == NotFoundCause::NotExisting);
  CHECK(none.errors.empty());
  CHECK_FALSE(none.publishes_spf());

  auto deny = audit_domain({std::nullopt, "deny.test"}, r);
  CHECK(deny.deny_all_only);
  CHECK_FALSE(deny.mx_present);
  REQUIRE(deny.expansion);
  CHECK(deny.expansion->v4_count == 0);
  auto stats = aggregate({deny});
  CHECK(stats.totals.spf_without_mx == 1);
  CHECK(stats.totals.deny_all_without_mx == 1);

  auto rrt = audit_domain({std::nullopt, "rrt.test"}, r);
  CHECK(rrt.flags.deprecated_spf_rrt);
  CHECK(rrt.expansion->v4_count == 256);

  auto two = audit_domain({std::nullopt, "two.test"}, r);
  CHECK(two.publishes_spf());
  REQUIRE(two.errors.size() == 1);
  CHECK(two.errors[0].label() == "RecordNotFound(MultipleRecords)");
}

TEST_CASE("fixture corpus ground truth") {
  ScanStats stats;
  auto audits = scan_all(corpus_entries(), corpus_resolver(), {}, &stats);
  REQUIRE(audits.size() == 20);
  CHECK(stats.audited == 20);
  // d01..d05 publish the same record.
  CHECK(stats.record_cache_hits == 4);

  auto s = aggregate(audits);
  CHECK(s.totals.scanned == 20);
  CHECK(s.totals.with_spf == 11);
  CHECK(s.spf_adoption == doctest::Approx(0.55));
  CHECK(s.totals.with_mx == 14);
  CHECK(s.totals.with_dmarc == 4);
  CHECK(s.dmarc_adoption == doctest::Approx(0.2));
  CHECK(s.totals.spf_without_mx == 2);
  CHECK(s.totals.deny_all_without_mx == 1);
  CHECK(s.totals.with_errors == 4);
  CHECK(s.totals.dns_errors == 1);
  CHECK(s.totals.with_expansion == 11);

  CHECK(s.error_histogram == std::map<std::string, std::uint64_t>{
                                 {"IncludeLoop", 1}, {"RecordNotFound", 1}, {"SyntaxError", 1}, {"TooManyLookups", 1}});
  CHECK(s.error_subtypes["RecordNotFound"] == std::map<std::string, std::uint64_t>{{"NotExisting", 1}});
  CHECK(s.error_subtypes["SyntaxError"] == std::map<std::string, std::uint64_t>{{"MisspelledIp4", 1}});
  CHECK(s.error_subtypes["IncludeLoop"] == std::map<std::string, std::uint64_t>{{"Depth1", 1}});

  // Counts 0 x4, 11, 256 x5, 262784.
  CHECK(s.cdf == std::vector<CdfPoint>{{0, 4.0 / 11}, {11, 5.0 / 11}, {256, 10.0 / 11}, {262784, 1.0}});
  CHECK(s.top_level_include_histogram == std::map<int, std::uint64_t>{{0, 3}, {1, 7}, {2, 1}});
  CHECK(s.subnet_size_histogram == std::map<int, std::uint64_t>{{14, 1}, {24, 7}, {25, 1}});
  CHECK(s.large_cidr_table.direct.empty());
  CHECK(s.large_cidr_table.include == std::map<int, std::uint64_t>{{14, 1}});
  CHECK(s.top_includes == std::vector<RankedInclude>{{"mail.prov.test", 6, 256},
                                                     {"big.prov.test", 1, 262400},
                                                     {"loop1.test", 1, 0},
                                                     {"loop2.test", 1, 0},
                                                     {"missing.test", 1, 0},
                                                     {"nested.prov.test", 1, 384}});

  const auto& d07 = find(audits, "d07.test");
  REQUIRE(d07.errors.size() == 1);
  CHECK(d07.errors[0].label() == "SyntaxError(MisspelledIp4)");
  CHECK(find(audits, "d08.test").flags.over_100k_ips);
  CHECK(find(audits, "d09.test").errors.at(0).label() == "RecordNotFound(NotExisting)");
  CHECK(find(audits, "d11.test").errors.at(0).label() == "IncludeLoop(1)");
  CHECK(find(audits, "d12.test").errors.at(0).kind == ErrorKind::TooManyLookups);
  CHECK(find(audits, "d06.test").deny_all_only);
  CHECK(find(audits, "n16.test").dns_error);
  CHECK(find(audits, "n14.test").spf_absent_cause == NotFoundCause::SpfMissing);
  CHECK(find(audits, "n15.test").spf_absent_cause == NotFoundCause::EmptyAnswer);
  CHECK(find(audits, "d01.test").dmarc.policy == DmarcPolicy::Reject);
  CHECK(find(audits, "d01.test").rank == 1u);
  CHECK(find(audits, "n20.test").rank == 19u);
}

TEST_CASE("scan determinism and cache transparency") {
  auto entries = corpus_entries();
  ScanOptions plain;
  plain.record_cache = false;
  const auto base = jsonl(scan_all(entries, corpus_resolver(), plain));

  for (int concurrency : {1, 4, 16}) {
    ScanOptions cached;
    cached.concurrency = concurrency;
    cached.cache_capacity = 64;
    ScanStats stats;
    CHECK(jsonl(scan_all(entries, corpus_resolver(), cached, &stats)) == base);
    CHECK(stats.record_cache_hits == 4);
    CHECK(stats.dns_cache.hits > 0);
  }
  ScanOptions limited;
  limited.qps = 100000;
  CHECK(jsonl(scan_all(entries, corpus_resolver(), limited)) == base);
}

TEST_CASE("record cache keeps domain-specific results apart") {
  auto zone = zone_from(R"(
a.test  TXT "v=spf1 include:b.test -all"
c.test  TXT "v=spf1 include:b.test -all"
b.test  TXT "v=spf1 include:a.test -all"
x.test  TXT "v=spf1 a -all"
x.test  A   192.0.2.1
y.test  TXT "v=spf1 a -all"
y.test  A   192.0.2.2
y.test  A   192.0.2.3
)");
  std::vector<DomainEntry> entries{{1, "a.test"}, {2, "c.test"}, {3, "x.test"}, {4, "y.test"}};
  ScanOptions on, off;
  off.record_cache = false;
  auto r = std::make_shared<ZoneResolver>(zone);
  ScanStats stats;
  auto cached = scan_all(entries, r, on, &stats);
  CHECK(cached == scan_all(entries, r, off));
  CHECK(stats.record_cache_hits == 0);
  CHECK(find(cached, "a.test").errors.at(0).label() == "IncludeLoop(1)");
  CHECK(find(cached, "x.test").expansion->v4_count == 1);
  CHECK(find(cached, "y.test").expansion->v4_count == 2);
}

TEST_CASE("aggregate and CDF") {
  CHECK(empirical_cdf({1, 16, 256, 1u << 20}) ==
        std::vector<CdfPoint>{{1, 0.25}, {16, 0.5}, {256, 0.75}, {1u << 20, 1.0}});
  CHECK(empirical_cdf({}).empty());

  auto empty = aggregate({});
  CHECK(empty.totals == CorpusTotals{});
  CHECK(empty.cdf.empty());
  CHECK(empty.spf_adoption == 0);
}

TEST_CASE("property: aggregation is a fold over additive fields") {
  auto audits = scan_all(corpus_entries(), corpus_resolver(), {});
  std::mt19937 rng(7);
  for (int round = 0; round < 50; ++round) {
    std::shuffle(audits.begin(), audits.end(), rng);
    const auto cut = std::uniform_int_distribution<std::size_t>(0, audits.size())(rng);
    std::vector<DomainAudit> a(audits.begin(), audits.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<DomainAudit> b(audits.begin() + static_cast<std::ptrdiff_t>(cut), audits.end());
    auto whole = aggregate(audits), sa = aggregate(a), sb = aggregate(b);
    const auto& t = whole.totals;
    CHECK(t.scanned == sa.totals.scanned + sb.totals.scanned);
    CHECK(t.with_mx == sa.totals.with_mx + sb.totals.with_mx);
    CHECK(t.with_spf == sa.totals.with_spf + sb.totals.with_spf);
    CHECK(t.with_dmarc == sa.totals.with_dmarc + sb.totals.with_dmarc);
    CHECK(t.spf_without_mx == sa.totals.spf_without_mx + sb.totals.spf_without_mx);
    CHECK(t.deny_all_without_mx == sa.totals.deny_all_without_mx + sb.totals.deny_all_without_mx);
    CHECK(t.with_errors == sa.totals.with_errors + sb.totals.with_errors);
    CHECK(t.dns_errors == sa.totals.dns_errors + sb.totals.dns_errors);
    auto sum = [](auto x, const auto& y) {
      for (const auto& [k, v] : y) x[k] += v;
      return x;
    };
    CHECK(whole.error_histogram == sum(sa.error_histogram, sb.error_histogram));
    CHECK(whole.top_level_include_histogram == sum(sa.top_level_include_histogram, sb.top_level_include_histogram));
    CHECK(whole.subnet_size_histogram == sum(sa.subnet_size_histogram, sb.subnet_size_histogram));
    for (std::size_t i = 1; i < whole.cdf.size(); ++i) CHECK(whole.cdf[i - 1].fraction <= whole.cdf[i].fraction);
    CHECK(whole.cdf.back().fraction == 1.0);
  }
}

TEST_CASE("JSONL round trip") {
  auto audits = scan_all(corpus_entries(), corpus_resolver(), {});
  for (const auto& a : audits) {
    auto line = audit_to_json_line(a);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line.find("\"schema\":\"spf-audit/1\"") != std::string::npos);
    CHECK(audit_from_json_line(line) == a);
  }
  std::istringstream in(jsonl(audits));
  auto back = read_jsonl(in);
  CHECK(back == audits);
  CHECK(aggregate(back) == aggregate(audits));

  std::istringstream broken(audit_to_json_line(audits[0]) + "\n{not json}\n");
  try {
    read_jsonl(broken);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  auto wrong = audit_to_json_line(audits[0]);
  wrong.replace(wrong.find("spf-audit/1"), 11, "spf-audit/9");
  CHECK_THROWS(audit_from_json_line(wrong));
}

TEST_CASE("reports") {
  auto audits = scan_all(corpus_entries(), corpus_resolver(), {});
  auto stats = aggregate(audits);

  std::ostringstream top;
  write_top_includes_csv(top, stats);
  CHECK(top.str().starts_with("include,used_by,allowed_ips\nmail.prov.test,6,256\nbig.prov.test,1,262400\n"));

  std::ostringstream large;
  write_large_cidrs_csv(large, stats);
  std::vector<std::string> lines;
  std::istringstream ls(large.str());
  for (std::string l; std::getline(ls, l);) lines.push_back(l);
  REQUIRE(lines.size() == 18);
  CHECK(lines[0] == "cidr,direct,include");
  CHECK(lines[1] == "/0,0,0");
  CHECK(lines[15] == "/14,0,1");
  CHECK(lines[17] == "/16,0,0");

  std::ostringstream js;
  write_stats_json(js, stats);
  CHECK(js.str().find("\"spf_adoption\": 0.55") != std::string::npos);

  auto dir = std::filesystem::temp_directory_path() / "spfaudit_report_test";
  std::filesystem::remove_all(dir);
  emit_report(stats, audits, ReportFormat::CsvTables, (dir / "tables").string());
  CHECK(std::filesystem::exists(dir / "tables" / "top_includes.csv"));
  CHECK(std::filesystem::exists(dir / "tables" / "large_cidrs.csv"));
  emit_report(stats, audits, ReportFormat::Jsonl, (dir / "audits.jsonl").string());
  std::ifstream back(dir / "audits.jsonl");
  CHECK(read_jsonl(back) == audits);

  const std::string bad = (dir / "no" / "such" / "dir" / "stats.json").string();
  try {
    emit_report(stats, audits, ReportFormat::Json, bad);
    FAIL("expected ReportIoError");
  } catch (const ReportIoError& e) {
    CHECK(e.path() == bad);
    CHECK(std::string(e.what()).find(bad) != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("remediation text") {
  auto audits = scan_all(corpus_entries(), corpus_resolver(), {});
  auto d07 = remediation_text(find(audits, "d07.test"));
  REQUIRE(d07);
  CHECK(d07->find("`ipv4:192.0.2.1`") != std::string::npos);
  CHECK(d07->find("`ip4:`") != std::string::npos);

  auto d12 = remediation_text(find(audits, "d12.test"));
  REQUIRE(d12);
  CHECK(d12->find("limit of 10") != std::string::npos);

  CHECK_FALSE(remediation_text(find(audits, "d01.test")));
  CHECK_FALSE(remediation_text(find(audits, "n20.test")));

  auto d08 = remediation_text(find(audits, "d08.test"));
  REQUIRE(d08);
  CHECK(d08->find("/14") != std::string::npos);
  CHECK(d08->find("100000") != std::string::npos);

  DomainAudit typo;
  typo.domain = "typo.test";
  typo.spf = SpfSection{"v=spf1 mx -al", ParseStatus::Invalid, {}, {}};
  typo.flags.no_restrictive_all = true;
  typo.flags.near_miss_terms.push_back({SyntaxErrorKind::UnknownTerm, {10, 13}, "-al"});
  auto t = remediation_text(typo);
  REQUIRE(t);
  CHECK(t->find("`-al`") != std::string::npos);
  CHECK(t->find("`-all`") != std::string::npos);

  // Deterministic.
  CHECK(remediation_text(find(audits, "d07.test")) == d07);
}

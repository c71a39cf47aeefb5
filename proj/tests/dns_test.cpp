#include <random>
#include <sstream>

#include "doctest.h"
#include "fake_dns_server.hpp"
#include "spfaudit/dns.hpp"
#include "spfaudit/dns_wire.hpp"
#include "spfaudit/live_resolver.hpp"

using namespace spfaudit;

namespace {

ZoneFixture zone_from(const std::string& text) {
  std::istringstream in(text);
  return load_zone_fixture(in);
}

/// Counts calls to an inner resolver.
class CountingResolver final : public Resolver {
 public:
  explicit CountingResolver(ResolverPtr inner) : inner_(std::move(inner)) {}
  DnsAnswer resolve(const DnsQuery& q) override {
    ++calls;
    return inner_->resolve(q);
  }
  std::atomic<int> calls{0};

 private:
  ResolverPtr inner_;
};

}  // namespace

TEST_CASE("fixture lookup and defaults") {
  auto zone = zone_from(R"(a.test TXT "v=spf1 -all")");
  ZoneResolver r(zone);
  CHECK(r.resolve({"a.test", RrType::TXT}) == DnsAnswer{DnsStatus::Records, {"v=spf1 -all"}});
  CHECK(r.resolve({"A.Test.", RrType::TXT}).has_records());
  CHECK(r.resolve({"nx.test", RrType::TXT}).status == DnsStatus::NxDomain);
  CHECK(r.resolve({"a.test", RrType::MX}).status == DnsStatus::Empty);
}

TEST_CASE("query names that cannot go on the wire") {
  ZoneResolver r(ZoneFixture{});
  const std::string label64(64, 'x');
  CHECK(r.resolve({label64 + ".test", RrType::TXT}).status == DnsStatus::LabelTooLong);
  CHECK(r.resolve({std::string(63, 'x') + ".test", RrType::TXT}).status == DnsStatus::NxDomain);
  std::string long_name;
  for (int i = 0; i < 5; ++i) long_name += std::string(60, 'y') + '.';
  long_name += "test";
  CHECK(r.resolve({long_name, RrType::TXT}).status == DnsStatus::NameTooLong);
}

TEST_CASE("fixture loader") {
  auto zone = zone_from(R"(
# comment line
a.test     TXT "v=spf1 -all"   # trailing comment
b.test     ERROR NXDOMAIN
c.test     TXT "v=spf1 include:x.test -all"
c.test     TXT "other=\"quoted\" # not a comment"
d.test     TXT "v=spf1 " "ip4:192.0.2.1 " "-all"
e.test     MX 10 Mail.E.Test.
e.test     A 192.0.2.7
e.test     AAAA 2001:db8::7
f.test     ERROR TIMEOUT
g.test     ERROR SERVFAIL
h.test     ERROR EMPTY
i.test     TXT "bad \255\255 bytes"
1.2.0.192.in-addr.arpa PTR mail.e.test.
)");
  ZoneResolver r(zone);
  CHECK(r.resolve({"a.test", RrType::TXT}).records == std::vector<std::string>{"v=spf1 -all"});
  CHECK(r.resolve({"b.test", RrType::TXT}).status == DnsStatus::NxDomain);
  CHECK(r.resolve({"c.test", RrType::TXT}).records ==
        std::vector<std::string>{"v=spf1 include:x.test -all", "other=\"quoted\" # not a comment"});
  CHECK(r.resolve({"d.test", RrType::TXT}).records == std::vector<std::string>{"v=spf1 ip4:192.0.2.1 -all"});
  CHECK(r.resolve({"e.test", RrType::MX}).records == std::vector<std::string>{"10 mail.e.test"});
  CHECK(r.resolve({"e.test", RrType::AAAA}).records == std::vector<std::string>{"2001:db8::7"});
  CHECK(r.resolve({"e.test", RrType::TXT}).status == DnsStatus::Empty);
  CHECK(r.resolve({"f.test", RrType::TXT}).status == DnsStatus::Timeout);
  CHECK(r.resolve({"g.test", RrType::A}).status == DnsStatus::ServFail);
  CHECK(r.resolve({"h.test", RrType::TXT}).status == DnsStatus::Empty);
  CHECK(r.resolve({"i.test", RrType::TXT}).status == DnsStatus::DecodeError);
  CHECK(r.resolve({"1.2.0.192.in-addr.arpa", RrType::PTR}).records == std::vector<std::string>{"mail.e.test"});
}

TEST_CASE("fixture loader reports the failing line") {
  const char* bad[] = {
      "a.test TXT v=spf1",             // unquoted
      "a.test TXT \"open",             // unterminated
      "a.test BOGUS x",                // unknown type
      "a.test ERROR REFUSED",          // unknown failure
      "a.test MX mail.test",           // missing preference
      "a.test A 300.1.1.1",            // bad address
      "a.test",                        // missing type
  };
  for (const char* line : bad) {
    CAPTURE(line);
    std::string text = "ok.test TXT \"v=spf1 -all\"\n\n";
    text += line;
    try {
      zone_from(text);
      FAIL("expected ZoneParseError");
    } catch (const ZoneParseError& e) {
      CHECK(e.line() == 3);
    }
  }
}

TEST_CASE("fixture resolver is deterministic") {
  auto zone = zone_from("a.test TXT \"v=spf1 -all\"\nb.test ERROR TIMEOUT\n");
  ZoneResolver r(zone);
  for (const char* name : {"a.test", "b.test", "c.test"})
    for (int i = 0; i < 3; ++i) CHECK(r.resolve({name, RrType::TXT}) == r.resolve({name, RrType::TXT}));
}

TEST_CASE("cache counts hits and misses") {
  auto zone = std::make_shared<ZoneResolver>(zone_from("a.test TXT \"v=spf1 -all\"\nb.test A 192.0.2.1\n"));

  SUBCASE("two identical queries") {
    auto cache = with_cache(zone, 16);
    cache->resolve({"a.test", RrType::TXT});
    cache->resolve({"a.test", RrType::TXT});
    CHECK(cache->stats().misses == 1);
    CHECK(cache->stats().hits == 1);
  }
  SUBCASE("three distinct then three repeated") {
    auto cache = with_cache(zone, 16);
    for (int round = 0; round < 2; ++round)
      for (const char* n : {"a.test", "b.test", "c.test"}) cache->resolve({n, RrType::TXT});
    CHECK(cache->stats().misses == 3);
    CHECK(cache->stats().hits == 3);
    CHECK(cache->stats().entries == 3);
  }
  SUBCASE("capacity one evicts") {
    auto counting = std::make_shared<CountingResolver>(zone);
    auto cache = with_cache(counting, 1);
    for (const char* n : {"a.test", "b.test", "a.test"}) cache->resolve({n, RrType::TXT});
    CHECK(cache->stats().misses == 3);
    CHECK(cache->stats().hits == 0);
    CHECK(counting->calls == 3);
  }
  SUBCASE("least recently used entry is evicted") {
    auto cache = with_cache(zone, 2);
    for (const char* n : {"a.test", "b.test", "a.test", "c.test", "a.test"}) cache->resolve({n, RrType::TXT});
    // c evicts b (a was touched), so the final a is a hit.
    CHECK(cache->stats().hits == 2);
    CHECK(cache->stats().misses == 3);
  }
}

TEST_CASE("cache is transparent") {
  ZoneFixture zone;
  for (int i = 0; i < 20; ++i) zone.add("d" + std::to_string(i) + ".test", RrType::TXT, "v=spf1 ip4:10.0.0." + std::to_string(i));
  zone.fail("t.test", DnsStatus::Timeout);
  auto plain = std::make_shared<ZoneResolver>(zone);
  auto cache = with_cache(plain, 4);
  std::mt19937 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto n = rng() % 25;
    DnsQuery q(n == 24 ? "t.test" : "d" + std::to_string(n) + ".test", rng() % 2 ? RrType::TXT : RrType::A);
    CHECK(cache->resolve(q) == plain->resolve(q));
  }
  const auto s = cache->stats();
  CHECK(s.hits + s.misses == 500);
  CHECK(s.entries <= 4);
}

TEST_CASE("cache tolerates concurrent callers") {
  ZoneFixture zone;
  for (int i = 0; i < 50; ++i) zone.add("d" + std::to_string(i) + ".test", RrType::A, "192.0.2." + std::to_string(i));
  auto plain = std::make_shared<ZoneResolver>(zone);
  auto cache = with_cache(plain, 8);
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 400; ++i) {
        DnsQuery q("d" + std::to_string((i * 7 + t) % 50) + ".test", RrType::A);
        if (!(cache->resolve(q) == plain->resolve(q))) ++mismatches;
      }
    });
  for (auto& th : threads) th.join();
  CHECK(mismatches == 0);
  CHECK(cache->stats().hits + cache->stats().misses == 3200);
}

TEST_CASE("rate limiter token bucket arithmetic") {
  using namespace std::chrono;
  auto zone = std::make_shared<ZoneResolver>(ZoneFixture{});
  steady_clock::time_point fake{};
  RateClock clock;
  clock.now = [&] { return fake; };
  clock.sleep = [&](RateClock::Duration d) { fake += d; };

  SUBCASE("qps=10, 100 queries take at least 9 seconds") {
    RateLimitedResolver r(zone, 10, clock);
    const auto start = fake;
    for (int i = 0; i < 100; ++i) r.resolve({"x.test", RrType::TXT});
    const double elapsed = duration<double>(fake - start).count();
    CHECK(elapsed >= 9.0 - 1e-6);
    CHECK(elapsed < 9.1);
  }
  SUBCASE("burst of ceil(qps) is immediate") {
    RateLimitedResolver r(zone, 2.5, clock);
    for (int i = 0; i < 3; ++i) r.resolve({"x.test", RrType::TXT});
    CHECK(fake == steady_clock::time_point{});
    r.resolve({"x.test", RrType::TXT});
    CHECK(duration<double>(fake.time_since_epoch()).count() == doctest::Approx(0.4));
  }
  SUBCASE("any one-second window stays within qps after the burst") {
    RateLimitedResolver r(zone, 5, clock);
    std::vector<double> times;
    for (int i = 0; i < 40; ++i) {
      r.resolve({"x.test", RrType::TXT});
      times.push_back(duration<double>(fake.time_since_epoch()).count());
    }
    // After the initial burst the spacing is 1/qps.
    for (std::size_t i = 6; i < times.size(); ++i) CHECK(times[i] - times[i - 1] == doctest::Approx(0.2));
  }
  SUBCASE("rejects non-positive qps") { CHECK_THROWS_AS(RateLimitedResolver(zone, 0, clock), std::invalid_argument); }
}

TEST_CASE("rate limiter on the real clock") {
  using namespace std::chrono;
  auto zone = std::make_shared<ZoneResolver>(ZoneFixture{});
  {
    auto r = with_rate_limit(zone, 1000);
    const auto start = steady_clock::now();
    for (int i = 0; i < 10; ++i) r->resolve({"x.test", RrType::TXT});
    CHECK(steady_clock::now() - start < milliseconds(50));
  }
  {
    auto r = with_rate_limit(zone, 40);
    const auto start = steady_clock::now();
    for (int i = 0; i < 60; ++i) r->resolve({"x.test", RrType::TXT});
    CHECK(steady_clock::now() - start >= milliseconds(490));
  }
}

TEST_CASE("wire encoding round-trips answers") {
  struct Case {
    DnsQuery q;
    DnsAnswer a;
  };
  const std::string long_txt = "v=spf1 " + std::string(400, 'a');
  const Case cases[] = {
      {{"example.com", RrType::TXT}, {DnsStatus::Records, {"v=spf1 -all", "other"}}},
      {{"example.com", RrType::TXT}, {DnsStatus::Records, {long_txt}}},
      {{"example.com", RrType::SPF}, {DnsStatus::Records, {"v=spf1 mx"}}},
      {{"mail.example.com", RrType::A}, {DnsStatus::Records, {"198.51.100.5", "192.0.2.1"}}},
      {{"mail.example.com", RrType::AAAA}, {DnsStatus::Records, {"2001:db8::5"}}},
      {{"example.com", RrType::MX}, {DnsStatus::Records, {"10 mail.example.com", "20 mx2.example.net"}}},
      {{"5.100.51.198.in-addr.arpa", RrType::PTR}, {DnsStatus::Records, {"mail.example.com"}}},
      {{"nx.example.com", RrType::TXT}, {DnsStatus::NxDomain, {}}},
      {{"empty.example.com", RrType::TXT}, {DnsStatus::Empty, {}}},
      {{"bad.example.com", RrType::TXT}, {DnsStatus::ServFail, {}}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.q.name);
    auto msg = wire::encode_response(0x1234, c.q, c.a);
    auto decoded = wire::decode_response(msg, c.q);
    CHECK(decoded.id == 0x1234);
    CHECK_FALSE(decoded.truncated);
    CHECK(decoded.answer == c.a);
  }
}

TEST_CASE("wire decoder rejects malformed messages") {
  DnsQuery q("example.com", RrType::TXT);
  auto good = wire::encode_response(7, q, DnsAnswer{DnsStatus::Records, {"v=spf1 -all"}});
  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    auto d = wire::decode_response(std::span(good).first(cut), q);
    CHECK(d.answer.status == DnsStatus::DecodeError);
  }
  // Compression pointer loop.
  auto looped = good;
  looped[12 + 13] = 0xc0;  // answer owner pointer already at 12+13; make question self-referential
  looped[12] = 0xc0;
  looped[13] = 0x0c;
  CHECK(wire::decode_response(looped, q).answer.status == DnsStatus::DecodeError);

  auto query = wire::encode_query(9, q);
  CHECK(wire::decode_response(query, q).answer.status == DnsStatus::DecodeError);  // QR bit clear
}

TEST_CASE("endpoint parsing") {
  CHECK(Endpoint::parse("127.0.0.1:5353")->port == 5353);
  CHECK(Endpoint::parse("8.8.8.8")->port == 53);
  CHECK(Endpoint::parse("[::1]:53")->host == "::1");
  CHECK(Endpoint::parse("::1")->host == "::1");
  CHECK_FALSE(Endpoint::parse("resolver.test:53"));
  CHECK_FALSE(Endpoint::parse("127.0.0.1:99999"));
  CHECK(Endpoint::parse("[::1]:53")->to_string() == "[::1]:53");
}

TEST_CASE("live resolver against a loopback server") {
  ZoneFixture zone;
  zone.add("example.com", RrType::TXT, "v=spf1 +mx a:puffin.example.com/28 -all");
  zone.add("example.com", RrType::MX, "10 mail.example.com");
  zone.add("mail.example.com", RrType::A, "198.51.100.5");
  zone.add("big.example.com", RrType::TXT, "v=spf1 " + std::string(700, 'x'));
  zone.fail("broken.example.com", DnsStatus::ServFail);
  testing::FakeDnsServer server(zone);

  LiveResolver live(Endpoint{"127.0.0.1", server.port()}, std::chrono::milliseconds(2000));
  CHECK(live.resolve({"example.com", RrType::TXT}) == zone.lookup({"example.com", RrType::TXT}));
  CHECK(live.resolve({"example.com", RrType::MX}).records == std::vector<std::string>{"10 mail.example.com"});
  CHECK(live.resolve({"mail.example.com", RrType::A}).records == std::vector<std::string>{"198.51.100.5"});
  CHECK(live.resolve({"nx.example.com", RrType::TXT}).status == DnsStatus::NxDomain);
  CHECK(live.resolve({"mail.example.com", RrType::TXT}).status == DnsStatus::Empty);
  CHECK(live.resolve({"broken.example.com", RrType::TXT}).status == DnsStatus::ServFail);
  CHECK(live.resolve({std::string(64, 'a') + ".com", RrType::TXT}).status == DnsStatus::LabelTooLong);

  // Truncated over UDP, completed over TCP.
  CHECK(server.tcp_queries() == 0);
  auto big = live.resolve({"big.example.com", RrType::TXT});
  CHECK(big.records == std::vector<std::string>{"v=spf1 " + std::string(700, 'x')});
  CHECK(server.tcp_queries() == 1);
}

TEST_CASE("live resolver maps silence onto Timeout") {
  testing::FakeDnsServer server(ZoneFixture{}, 512, /*silent=*/true);
  LiveResolver live(Endpoint{"127.0.0.1", server.port()}, std::chrono::milliseconds(100));
  CHECK(live.resolve({"example.com", RrType::TXT}).status == DnsStatus::Timeout);
}

TEST_CASE("overlay prefers the zone") {
  auto fallback = std::make_shared<ZoneResolver>(zone_from("b.test TXT \"v=spf1 +all\"\na.test TXT \"v=spf1 ?all\"\n"));
  OverlayResolver overlay(zone_from("a.test TXT \"v=spf1 -all\"\nc.test ERROR NXDOMAIN\n"), fallback);
  CHECK(overlay.resolve({"a.test", RrType::TXT}).records == std::vector<std::string>{"v=spf1 -all"});
  CHECK(overlay.resolve({"a.test", RrType::A}).status == DnsStatus::Empty);
  CHECK(overlay.resolve({"b.test", RrType::TXT}).records == std::vector<std::string>{"v=spf1 +all"});
  CHECK(overlay.resolve({"c.test", RrType::TXT}).status == DnsStatus::NxDomain);
}

TEST_CASE("mx payload parsing") {
  auto mx = parse_mx("10 Mail.Example.COM.");
  REQUIRE(mx);
  CHECK(mx->first == 10);
  CHECK(mx->second == "mail.example.com");
  CHECK_FALSE(parse_mx("mail.example.com"));
}

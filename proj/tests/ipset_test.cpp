#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "spfaudit/ipset.hpp"

using namespace spfaudit;

namespace {

Cidr4 cidr(const char* text) { return *Cidr4::parse(text); }

// Enumerates every member address; only usable for small ranges.
std::set<std::uint32_t> enumerate(const std::vector<Cidr4>& cidrs) {
  std::set<std::uint32_t> out;
  for (const auto& c : cidrs)
    for (std::uint64_t a = c.first(); a <= c.last(); ++a) out.insert(static_cast<std::uint32_t>(a));
  return out;
}

}  // namespace

TEST_CASE("addresses parse and print") {
  CHECK(Ipv4::parse("192.0.2.1")->to_string() == "192.0.2.1");
  CHECK_FALSE(Ipv4::parse("192.0.2"));
  CHECK_FALSE(Ipv4::parse("192.0.2.256"));
  CHECK_FALSE(Ipv4::parse("example.com"));
  CHECK(Ipv6::parse("2001:db8::1")->to_string() == "2001:db8::1");
  CHECK(cidr("192.0.2.77/24").to_string() == "192.0.2.0/24");
  CHECK(cidr("10.0.0.1").prefix() == 32);
  CHECK_FALSE(Cidr4::parse("10.0.0.0/33"));
  CHECK(Ipv6::parse("2001:db8::1")->in_prefix(*Ipv6::parse("2001:db8::"), 32));
  CHECK_FALSE(Ipv6::parse("2001:db9::1")->in_prefix(*Ipv6::parse("2001:db8::"), 32));
}

TEST_CASE("count_ips examples") {
  IpSet empty;
  CHECK(empty.count() == 0);

  IpSet all;
  all.insert(cidr("0.0.0.0/0"));
  CHECK(all.count() == 4294967296ull);
  CHECK(all.contains(Ipv4{0xffffffffu}));

  // Two /30s: brute-force enumeration gives 8 members.
  IpSet two;
  two.insert(cidr("198.51.100.0/30"));
  two.insert(cidr("198.51.100.8/30"));
  CHECK(enumerate({cidr("198.51.100.0/30"), cidr("198.51.100.8/30")}).size() == 8);
  CHECK(two.count() == 8);
  CHECK(two.ranges().size() == 2);
}

TEST_CASE("adjacent and overlapping ranges merge") {
  IpSet s;
  s.insert(cidr("192.0.2.0/25"));
  s.insert(cidr("192.0.2.128/25"));
  CHECK(s.count() == 256);
  REQUIRE(s.ranges().size() == 1);
  CHECK(s.to_cidrs() == std::vector<Cidr4>{cidr("192.0.2.0/24")});

  IpSet overlap;
  overlap.insert(cidr("10.0.0.0/24"));
  overlap.insert(cidr("10.0.0.0/25"));
  CHECK(overlap.count() == 256);

  IpSet edge;
  edge.insert(cidr("255.255.255.255/32"));
  edge.insert(cidr("0.0.0.0/32"));
  edge.insert(cidr("255.255.255.254/32"));
  CHECK(edge.count() == 3);
  CHECK(edge.ranges().size() == 2);
}

TEST_CASE("membership and cardinality match brute force on random small sets") {
  std::mt19937 rng(7);
  for (int round = 0; round < 200; ++round) {
    std::vector<Cidr4> cidrs;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      // Cluster inside 10.0.0.0/16 so ranges collide often.
      Ipv4 base{static_cast<std::uint32_t>(0x0a000000u | (rng() & 0xffffu))};
      cidrs.emplace_back(base, 22 + static_cast<int>(rng() % 11));
    }
    IpSet s;
    for (const auto& c : cidrs) s.insert(c);
    const auto members = enumerate(cidrs);
    CHECK(s.count() == members.size());
    for (int probe = 0; probe < 50; ++probe) {
      Ipv4 addr{static_cast<std::uint32_t>(0x0a000000u | (rng() & 0x1ffffu))};
      CHECK(s.contains(addr) == members.contains(addr.value()));
    }
    // Canonical form: ranges strictly separated by at least one address.
    auto ranges = s.ranges();
    for (std::size_t i = 1; i < ranges.size(); ++i) CHECK(std::uint64_t{ranges[i - 1].last} + 1 < ranges[i].first);
    // CIDR decomposition covers exactly the same addresses.
    CHECK(enumerate(s.to_cidrs()) == members);
  }
}

TEST_CASE("insertion order does not change the canonical set") {
  std::mt19937 rng(11);
  std::vector<Cidr4> cidrs;
  for (int i = 0; i < 40; ++i) cidrs.emplace_back(Ipv4{static_cast<std::uint32_t>(rng())}, 8 + static_cast<int>(rng() % 25));
  IpSet reference;
  for (const auto& c : cidrs) reference.insert(c);
  for (int shuffle = 0; shuffle < 20; ++shuffle) {
    std::shuffle(cidrs.begin(), cidrs.end(), rng);
    IpSet s;
    for (const auto& c : cidrs) s.insert(c);
    CHECK(s == reference);
  }
}

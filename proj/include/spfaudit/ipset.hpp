#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spfaudit/ip.hpp"

namespace spfaudit {

/// Closed interval [first, last] of IPv4 addresses.
struct Ipv4Range {
  std::uint32_t first = 0;
  std::uint32_t last = 0;

  std::uint64_t size() const { return std::uint64_t{last} - first + 1; }
  bool operator==(const Ipv4Range&) const = default;
};

/// Set of IPv4 addresses in canonical form: sorted, disjoint and
/// non-adjacent ranges. Two sets holding the same addresses compare equal.
class IpSet {
 public:
  IpSet() = default;

  void insert(const Cidr4& cidr);
  void insert(Ipv4Range range);
  void unite(const IpSet& other);

  bool contains(Ipv4 addr) const;
  bool empty() const { return ranges_.empty(); }

  /// Exact number of addresses; up to 2^32.
  std::uint64_t count() const;

  std::span<const Ipv4Range> ranges() const { return ranges_; }

  /// Minimal CIDR decomposition of the set, in address order.
  std::vector<Cidr4> to_cidrs() const;

  bool operator==(const IpSet&) const = default;

 private:
  std::vector<Ipv4Range> ranges_;
};

}  // namespace spfaudit

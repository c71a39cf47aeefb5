#include "spfaudit/ipset.hpp"

#include <algorithm>
#include <bit>

namespace spfaudit {

void IpSet::insert(const Cidr4& cidr) { insert(Ipv4Range{cidr.first(), cidr.last()}); }

void IpSet::insert(Ipv4Range range) {
  // Find the first range that could touch `range` (its last + 1 >= range.first).
  auto it = std::lower_bound(ranges_.begin(), ranges_.end(), range.first,
                             [](const Ipv4Range& r, std::uint32_t first) {
                               return std::uint64_t{r.last} + 1 < first;
                             });
  auto end = it;
  while (end != ranges_.end() && std::uint64_t{end->first} <= std::uint64_t{range.last} + 1) {
    range.first = std::min(range.first, end->first);
    range.last = std::max(range.last, end->last);
    ++end;
  }
  it = ranges_.erase(it, end);
  ranges_.insert(it, range);
}

void IpSet::unite(const IpSet& other) {
  for (const auto& r : other.ranges_) insert(r);
}

bool IpSet::contains(Ipv4 addr) const {
  const auto v = addr.value();
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), v,
                             [](std::uint32_t x, const Ipv4Range& r) { return x < r.first; });
  if (it == ranges_.begin()) return false;
  --it;
  return v <= it->last;
}

std::uint64_t IpSet::count() const {
  std::uint64_t total = 0;
  for (const auto& r : ranges_) total += r.size();
  return total;
}

std::vector<Cidr4> IpSet::to_cidrs() const {
  std::vector<Cidr4> out;
  for (const auto& r : ranges_) {
    std::uint64_t cur = r.first;
    const std::uint64_t end = std::uint64_t{r.last} + 1;
    while (cur < end) {
      // Largest aligned block starting at cur that fits before end.
      int host_bits = cur == 0 ? 32 : std::countr_zero(static_cast<std::uint32_t>(cur));
      while (host_bits > 0 && cur + (std::uint64_t{1} << host_bits) > end) --host_bits;
      out.emplace_back(Ipv4{static_cast<std::uint32_t>(cur)}, 32 - host_bits);
      cur += std::uint64_t{1} << host_bits;
    }
  }
  return out;
}

}  // namespace spfaudit

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace spfaudit {

/// IPv4 address held in host byte order.
class Ipv4 {
 public:
  constexpr Ipv4() = default;
  constexpr explicit Ipv4(std::uint32_t value) : value_(value) {}

  static std::optional<Ipv4> parse(std::string_view text);

  constexpr std::uint32_t value() const { return value_; }
  std::string to_string() const;

  auto operator<=>(const Ipv4&) const = default;

 private:
  std::uint32_t value_ = 0;
};

/// IPv6 address in network byte order.
class Ipv6 {
 public:
  using Bytes = std::array<std::uint8_t, 16>;

  Ipv6() = default;
  explicit Ipv6(const Bytes& bytes) : bytes_(bytes) {}

  static std::optional<Ipv6> parse(std::string_view text);

  const Bytes& bytes() const { return bytes_; }
  std::string to_string() const;
  bool in_prefix(const Ipv6& network, int prefix) const;

  auto operator<=>(const Ipv6&) const = default;

 private:
  Bytes bytes_{};
};

using IpAddress = std::variant<Ipv4, Ipv6>;

std::optional<IpAddress> parse_ip(std::string_view text);
std::string to_string(const IpAddress& addr);

/// Netmask with `prefix` leading one bits; prefix is clamped to 0..32.
constexpr std::uint32_t ipv4_mask(int prefix) {
  if (prefix <= 0) return 0;
  if (prefix >= 32) return 0xffffffffu;
  return ~std::uint32_t{0} << (32 - prefix);
}

/// An IPv4 network. The stored address is always the network address.
class Cidr4 {
 public:
  constexpr Cidr4() = default;
  constexpr Cidr4(Ipv4 addr, int prefix)
      : network_(addr.value() & ipv4_mask(prefix)), prefix_(prefix) {}

  /// Accepts "a.b.c.d" or "a.b.c.d/p".
  static std::optional<Cidr4> parse(std::string_view text);

  constexpr Ipv4 network() const { return Ipv4{network_}; }
  constexpr int prefix() const { return prefix_; }
  constexpr std::uint32_t first() const { return network_; }
  constexpr std::uint32_t last() const { return network_ | ~ipv4_mask(prefix_); }
  constexpr std::uint64_t size() const { return std::uint64_t{1} << (32 - prefix_); }
  constexpr bool contains(Ipv4 addr) const {
    return (addr.value() & ipv4_mask(prefix_)) == network_;
  }

  std::string to_string() const;

  auto operator<=>(const Cidr4&) const = default;

 private:
  std::uint32_t network_ = 0;
  int prefix_ = 32;
};

}  // namespace spfaudit

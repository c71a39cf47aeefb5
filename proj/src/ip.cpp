#include "spfaudit/ip.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <charconv>
#include <cstring>

namespace spfaudit {

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
  if (text.empty() || text.size() > 15) return std::nullopt;
  char buf[16] = {};
  std::memcpy(buf, text.data(), text.size());
  in_addr addr{};
  if (inet_pton(AF_INET, buf, &addr) != 1) return std::nullopt;
  return Ipv4{ntohl(addr.s_addr)};
}

std::string Ipv4::to_string() const {
  return std::to_string(value_ >> 24) + '.' + std::to_string((value_ >> 16) & 0xff) + '.' +
         std::to_string((value_ >> 8) & 0xff) + '.' + std::to_string(value_ & 0xff);
}

std::optional<Ipv6> Ipv6::parse(std::string_view text) {
  if (text.empty() || text.size() >= INET6_ADDRSTRLEN) return std::nullopt;
  char buf[INET6_ADDRSTRLEN] = {};
  std::memcpy(buf, text.data(), text.size());
  Bytes bytes{};
  if (inet_pton(AF_INET6, buf, bytes.data()) != 1) return std::nullopt;
  return Ipv6{bytes};
}

std::string Ipv6::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {};
  inet_ntop(AF_INET6, bytes_.data(), buf, sizeof(buf));
  return buf;
}

bool Ipv6::in_prefix(const Ipv6& network, int prefix) const {
  for (int bit = 0; bit < prefix && bit < 128; bit += 8) {
    const int bits = std::min(8, prefix - bit);
    const auto mask = static_cast<std::uint8_t>(0xff << (8 - bits));
    if ((bytes_[bit / 8] & mask) != (network.bytes_[bit / 8] & mask)) return false;
  }
  return true;
}

std::optional<IpAddress> parse_ip(std::string_view text) {
  if (auto v4 = Ipv4::parse(text)) return IpAddress{*v4};
  if (auto v6 = Ipv6::parse(text)) return IpAddress{*v6};
  return std::nullopt;
}

std::string to_string(const IpAddress& addr) {
  return std::visit([](const auto& a) { return a.to_string(); }, addr);
}

std::optional<Cidr4> Cidr4::parse(std::string_view text) {
  int prefix = 32;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    auto digits = text.substr(slash + 1);
    if (digits.empty() || digits.size() > 2) return std::nullopt;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), prefix);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || prefix < 0 || prefix > 32)
      return std::nullopt;
    text = text.substr(0, slash);
  }
  auto addr = Ipv4::parse(text);
  if (!addr) return std::nullopt;
  return Cidr4{*addr, prefix};
}

std::string Cidr4::to_string() const {
  return network().to_string() + '/' + std::to_string(prefix_);
}

}  // namespace spfaudit

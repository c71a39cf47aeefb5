#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "spfaudit/dns.hpp"

namespace spfaudit {

struct Endpoint {
  std::string host;  // IPv4 or IPv6 literal
  std::uint16_t port = 53;

  /// "host:port", "[v6]:port" or a bare address (port 53).
  static std::optional<Endpoint> parse(std::string_view text);
  std::string to_string() const;
};

/// First "nameserver" entry of a resolv.conf-style file, if any.
std::optional<Endpoint> system_nameserver(const std::string& resolv_conf = "/etc/resolv.conf");

/// Talks to one recursive resolver over UDP, retrying over TCP when the
/// answer is truncated. Transport failures map onto Timeout/ServFail.
class LiveResolver final : public Resolver {
 public:
  explicit LiveResolver(Endpoint endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(5));
  DnsAnswer resolve(const DnsQuery& query) override;

 private:
  DnsAnswer query_udp(const DnsQuery& query, bool& truncated);
  DnsAnswer query_tcp(const DnsQuery& query);

  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

}  // namespace spfaudit

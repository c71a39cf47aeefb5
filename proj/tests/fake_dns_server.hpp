#pragma once

// Loopback DNS server answering from a ZoneFixture, for exercising
// LiveResolver without network access. UDP answers larger than
// `udp_limit` bytes are sent truncated so the client retries over TCP.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <thread>

#include "spfaudit/dns.hpp"
#include "spfaudit/dns_wire.hpp"

namespace spfaudit::testing {

class FakeDnsServer {
 public:
  explicit FakeDnsServer(ZoneFixture zone, std::size_t udp_limit = 512, bool silent = false)
      : zone_(std::move(zone)), udp_limit_(udp_limit), silent_(silent) {
    udp_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    tcp_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(udp_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    socklen_t len = sizeof(addr);
    ::getsockname(udp_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    int one = 1;
    ::setsockopt(tcp_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    ::bind(tcp_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    ::listen(tcp_, 8);
    thread_ = std::thread([this] { loop(); });
  }

  ~FakeDnsServer() {
    stop_ = true;
    thread_.join();
    ::close(udp_);
    ::close(tcp_);
  }

  std::uint16_t port() const { return port_; }
  int tcp_queries() const { return tcp_queries_; }

 private:
  std::vector<std::uint8_t> answer(std::span<const std::uint8_t> msg, bool over_tcp) {
    // Question starts at byte 12: read the name labels by hand.
    std::string name;
    std::size_t p = 12;
    while (p < msg.size() && msg[p] != 0) {
      if (!name.empty()) name += '.';
      name.append(reinterpret_cast<const char*>(&msg[p + 1]), msg[p]);
      p += 1 + msg[p];
    }
    const std::uint16_t code = static_cast<std::uint16_t>((msg[p + 1] << 8) | msg[p + 2]);
    RrType type = RrType::TXT;
    for (auto t : {RrType::TXT, RrType::A, RrType::AAAA, RrType::MX, RrType::PTR, RrType::SPF})
      if (wire::rrtype_code(t) == code) type = t;
    const auto id = static_cast<std::uint16_t>((msg[0] << 8) | msg[1]);
    DnsQuery q(name, type);
    auto a = zone_.lookup(q);
    auto full = wire::encode_response(id, q, a);
    if (!over_tcp && full.size() > udp_limit_) return wire::encode_response(id, q, a, true);
    return full;
  }

  void loop() {
    while (!stop_) {
      pollfd fds[2] = {{udp_, POLLIN, 0}, {tcp_, POLLIN, 0}};
      if (::poll(fds, 2, 20) <= 0) continue;
      if (fds[0].revents & POLLIN) {
        std::uint8_t buf[1500];
        sockaddr_in peer{};
        socklen_t plen = sizeof(peer);
        auto n = ::recvfrom(udp_, buf, sizeof(buf), 0, reinterpret_cast<sockaddr*>(&peer), &plen);
        if (n > 0 && !silent_) {
          auto out = answer({buf, static_cast<std::size_t>(n)}, false);
          ::sendto(udp_, out.data(), out.size(), 0, reinterpret_cast<sockaddr*>(&peer), plen);
        }
      }
      if (fds[1].revents & POLLIN) {
        int c = ::accept(tcp_, nullptr, nullptr);
        if (c < 0) continue;
        ++tcp_queries_;
        std::uint8_t lenb[2];
        if (::recv(c, lenb, 2, MSG_WAITALL) == 2) {
          std::vector<std::uint8_t> msg((lenb[0] << 8) | lenb[1]);
          if (::recv(c, msg.data(), msg.size(), MSG_WAITALL) == static_cast<ssize_t>(msg.size())) {
            auto out = answer(msg, true);
            std::uint8_t hdr[2] = {static_cast<std::uint8_t>(out.size() >> 8), static_cast<std::uint8_t>(out.size())};
            ::send(c, hdr, 2, MSG_NOSIGNAL);
            ::send(c, out.data(), out.size(), MSG_NOSIGNAL);
          }
        }
        ::close(c);
      }
    }
  }

  ZoneFixture zone_;
  std::size_t udp_limit_;
  bool silent_;
  int udp_ = -1;
  int tcp_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<int> tcp_queries_{0};
  std::thread thread_;
};

}  // namespace spfaudit::testing

#include "spfaudit/live_resolver.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "spfaudit/dns_wire.hpp"
#include "spfaudit/ip.hpp"

namespace spfaudit {

namespace {

class Socket {
 public:
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

 private:
  int fd_;
};

struct SockAddr {
  sockaddr_storage storage{};
  socklen_t len = 0;
};

std::optional<SockAddr> to_sockaddr(const Endpoint& ep) {
  SockAddr out;
  auto addr = parse_ip(ep.host);
  if (!addr) return std::nullopt;
  if (auto* v4 = std::get_if<Ipv4>(&*addr)) {
    auto* sin = reinterpret_cast<sockaddr_in*>(&out.storage);
    sin->sin_family = AF_INET;
    sin->sin_port = htons(ep.port);
    sin->sin_addr.s_addr = htonl(v4->value());
    out.len = sizeof(sockaddr_in);
  } else {
    auto* sin6 = reinterpret_cast<sockaddr_in6*>(&out.storage);
    sin6->sin6_family = AF_INET6;
    sin6->sin6_port = htons(ep.port);
    std::memcpy(&sin6->sin6_addr, std::get<Ipv6>(*addr).bytes().data(), 16);
    out.len = sizeof(sockaddr_in6);
  }
  return out;
}

bool wait_for(int fd, short events, std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
  if (left.count() <= 0) return false;
  pollfd p{fd, events, 0};
  return ::poll(&p, 1, static_cast<int>(left.count())) == 1 && (p.revents & events);
}

std::uint16_t random_id() {
  thread_local std::mt19937 rng{std::random_device{}()};
  return static_cast<std::uint16_t>(rng());
}

bool send_all(int fd, const std::uint8_t* data, std::size_t n, std::chrono::steady_clock::time_point deadline) {
  while (n > 0) {
    if (!wait_for(fd, POLLOUT, deadline)) return false;
    const auto sent = ::send(fd, data, n, MSG_NOSIGNAL);
    if (sent <= 0) return false;
    data += sent;
    n -= static_cast<std::size_t>(sent);
  }
  return true;
}

bool recv_all(int fd, std::uint8_t* data, std::size_t n, std::chrono::steady_clock::time_point deadline) {
  while (n > 0) {
    if (!wait_for(fd, POLLIN, deadline)) return false;
    const auto got = ::recv(fd, data, n, 0);
    if (got <= 0) return false;
    data += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

}  // namespace

std::optional<Endpoint> Endpoint::parse(std::string_view text) {
  Endpoint ep;
  std::string_view host = text;
  std::string_view port;
  if (!text.empty() && text.front() == '[') {
    const auto close = text.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = text.substr(1, close - 1);
    auto rest = text.substr(close + 1);
    if (!rest.empty()) {
      if (rest.front() != ':') return std::nullopt;
      port = rest.substr(1);
    }
  } else if (std::count(text.begin(), text.end(), ':') == 1) {
    const auto colon = text.find(':');
    host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  if (!parse_ip(host)) return std::nullopt;
  ep.host = std::string(host);
  if (!port.empty()) {
    unsigned value = 0;
    auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc{} || p != port.data() + port.size() || value == 0 || value > 65535) return std::nullopt;
    ep.port = static_cast<std::uint16_t>(value);
  }
  return ep;
}

std::string Endpoint::to_string() const {
  if (host.find(':') != std::string::npos) return '[' + host + "]:" + std::to_string(port);
  return host + ':' + std::to_string(port);
}

std::optional<Endpoint> system_nameserver(const std::string& resolv_conf) {
  std::ifstream in(resolv_conf);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::string key, value;
    if (words >> key >> value && key == "nameserver") {
      if (auto ep = Endpoint::parse(value)) return ep;
    }
  }
  return std::nullopt;
}

LiveResolver::LiveResolver(Endpoint endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

DnsAnswer LiveResolver::resolve(const DnsQuery& query) {
  if (auto bad = check_name(query.name)) return DnsAnswer::failure(*bad);
  if (query.name.empty() || query.name.find("..") != std::string::npos || query.name.front() == '.')
    return DnsAnswer::failure(DnsStatus::DecodeError);
  bool truncated = false;
  DnsAnswer answer = query_udp(query, truncated);
  if (truncated) answer = query_tcp(query);
  return validate_text_payloads(query, std::move(answer));
}

DnsAnswer LiveResolver::query_udp(const DnsQuery& query, bool& truncated) {
  auto addr = to_sockaddr(endpoint_);
  if (!addr) return DnsAnswer::failure(DnsStatus::ServFail);
  Socket sock(::socket(addr->storage.ss_family, SOCK_DGRAM | SOCK_CLOEXEC, 0));
  if (!sock.valid()) return DnsAnswer::failure(DnsStatus::ServFail);
  if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr->storage), addr->len) != 0)
    return DnsAnswer::failure(DnsStatus::ServFail);

  const auto id = random_id();
  const auto packet = wire::encode_query(id, query);
  if (::send(sock.fd(), packet.data(), packet.size(), 0) < 0) return DnsAnswer::failure(DnsStatus::ServFail);

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::vector<std::uint8_t> buf(4096);
  while (wait_for(sock.fd(), POLLIN, deadline)) {
    const auto n = ::recv(sock.fd(), buf.data(), buf.size(), 0);
    if (n < 0) return DnsAnswer::failure(DnsStatus::ServFail);
    auto decoded = wire::decode_response({buf.data(), static_cast<std::size_t>(n)}, query);
    if (decoded.answer.status != DnsStatus::DecodeError && decoded.id != id) continue;  // stray datagram
    truncated = decoded.truncated;
    return decoded.answer;
  }
  return DnsAnswer::failure(DnsStatus::Timeout);
}

DnsAnswer LiveResolver::query_tcp(const DnsQuery& query) {
  auto addr = to_sockaddr(endpoint_);
  if (!addr) return DnsAnswer::failure(DnsStatus::ServFail);
  Socket sock(::socket(addr->storage.ss_family, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!sock.valid()) return DnsAnswer::failure(DnsStatus::ServFail);
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr->storage), addr->len) != 0) {
    if (errno != EINPROGRESS) return DnsAnswer::failure(DnsStatus::ServFail);
    if (!wait_for(sock.fd(), POLLOUT, deadline)) return DnsAnswer::failure(DnsStatus::Timeout);
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(sock.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) return DnsAnswer::failure(DnsStatus::ServFail);
  }

  const auto id = random_id();
  auto packet = wire::encode_query(id, query);
  std::vector<std::uint8_t> framed{static_cast<std::uint8_t>(packet.size() >> 8),
                                   static_cast<std::uint8_t>(packet.size())};
  framed.insert(framed.end(), packet.begin(), packet.end());
  if (!send_all(sock.fd(), framed.data(), framed.size(), deadline)) return DnsAnswer::failure(DnsStatus::Timeout);

  std::uint8_t len_buf[2];
  if (!recv_all(sock.fd(), len_buf, 2, deadline)) return DnsAnswer::failure(DnsStatus::Timeout);
  std::vector<std::uint8_t> msg(static_cast<std::size_t>((len_buf[0] << 8) | len_buf[1]));
  if (!recv_all(sock.fd(), msg.data(), msg.size(), deadline)) return DnsAnswer::failure(DnsStatus::Timeout);
  auto decoded = wire::decode_response(msg, query);
  if (decoded.answer.status != DnsStatus::DecodeError && decoded.id != id)
    return DnsAnswer::failure(DnsStatus::DecodeError);
  return decoded.answer;
}

}  // namespace spfaudit

#include "spfaudit/dns_wire.hpp"

#include <arpa/inet.h>

#include <stdexcept>

#include "spfaudit/ip.hpp"

namespace spfaudit::wire {

namespace {

constexpr std::uint16_t kClassIn = 1;
constexpr std::uint16_t kFlagQr = 0x8000;
constexpr std::uint16_t kFlagTc = 0x0200;
constexpr std::uint16_t kFlagRd = 0x0100;
constexpr std::uint16_t kFlagRa = 0x0080;
constexpr std::uint8_t kRcodeServFail = 2;
constexpr std::uint8_t kRcodeNxDomain = 3;

struct Malformed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void name(std::string_view n) {
    while (!n.empty()) {
      const auto dot = n.find('.');
      auto label = n.substr(0, dot);
      if (label.empty() || label.size() > 63) throw Malformed("unencodable name");
      u8(static_cast<std::uint8_t>(label.size()));
      out_.insert(out_.end(), label.begin(), label.end());
      n = dot == std::string_view::npos ? std::string_view{} : n.substr(dot + 1);
    }
    u8(0);
  }
  std::size_t size() const { return out_.size(); }
  void patch_u16(std::size_t at, std::uint16_t v) {
    out_[at] = static_cast<std::uint8_t>(v >> 8);
    out_[at + 1] = static_cast<std::uint8_t>(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> msg) : msg_(msg) {}

  std::uint8_t u8() {
    need(1);
    return msg_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>((msg_[pos_] << 8) | msg_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    const std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = msg_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) {
    if (p > msg_.size()) throw Malformed("seek past end");
    pos_ = p;
  }

  /// Reads a possibly compressed name starting at the current position.
  std::string name() {
    std::string out;
    std::size_t p = pos_;
    std::optional<std::size_t> resume;
    for (int jumps = 0;; ) {
      if (p >= msg_.size()) throw Malformed("name past end");
      const std::uint8_t len = msg_[p];
      if ((len & 0xc0) == 0xc0) {
        if (p + 1 >= msg_.size()) throw Malformed("truncated pointer");
        if (!resume) resume = p + 2;
        p = static_cast<std::size_t>(((len & 0x3f) << 8) | msg_[p + 1]);
        if (++jumps > 64) throw Malformed("compression loop");
        continue;
      }
      if (len & 0xc0) throw Malformed("bad label type");
      if (len == 0) {
        ++p;
        break;
      }
      if (p + 1 + len > msg_.size()) throw Malformed("label past end");
      if (!out.empty()) out += '.';
      out.append(reinterpret_cast<const char*>(&msg_[p + 1]), len);
      p += 1 + len;
    }
    pos_ = resume ? *resume : p;
    return normalize_name(out);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > msg_.size()) throw Malformed("message truncated");
  }

  std::span<const std::uint8_t> msg_;
  std::size_t pos_ = 0;
};

std::string decode_rdata(Reader& r, std::uint16_t type, std::uint16_t rdlen) {
  const std::size_t end = r.pos() + rdlen;
  std::string out;
  switch (type) {
    case 16:  // TXT
    case 99:  // SPF
      while (r.pos() < end) {
        const auto len = r.u8();
        auto chunk = r.take(len);
        out.append(chunk.begin(), chunk.end());
      }
      break;
    case 1: {
      if (rdlen != 4) throw Malformed("bad A rdata");
      out = Ipv4{r.u32()}.to_string();
      break;
    }
    case 28: {
      if (rdlen != 16) throw Malformed("bad AAAA rdata");
      Ipv6::Bytes b{};
      auto raw = r.take(16);
      std::copy(raw.begin(), raw.end(), b.begin());
      out = Ipv6{b}.to_string();
      break;
    }
    case 15: {
      const auto pref = r.u16();
      out = std::to_string(pref) + ' ' + r.name();
      break;
    }
    case 12:
      out = r.name();
      break;
    default:
      r.take(rdlen);
  }
  if (r.pos() != end) throw Malformed("rdata length mismatch");
  return out;
}

void encode_rdata(Writer& w, RrType type, const std::string& payload) {
  const std::size_t len_at = w.size();
  w.u16(0);
  const std::size_t start = w.size();
  switch (type) {
    case RrType::TXT:
    case RrType::SPF: {
      std::string_view rest = payload;
      do {
        auto chunk = rest.substr(0, 255);
        w.u8(static_cast<std::uint8_t>(chunk.size()));
        w.bytes({reinterpret_cast<const std::uint8_t*>(chunk.data()), chunk.size()});
        rest.remove_prefix(chunk.size());
      } while (!rest.empty());
      break;
    }
    case RrType::A:
      w.u32(Ipv4::parse(payload).value_or(Ipv4{}).value());
      break;
    case RrType::AAAA:
      w.bytes(Ipv6::parse(payload).value_or(Ipv6{}).bytes());
      break;
    case RrType::MX: {
      auto mx = parse_mx(payload).value_or(std::pair{0, std::string{}});
      w.u16(static_cast<std::uint16_t>(mx.first));
      w.name(mx.second);
      break;
    }
    case RrType::PTR:
      w.name(payload);
      break;
  }
  w.patch_u16(len_at, static_cast<std::uint16_t>(w.size() - start));
}

}  // namespace

std::uint16_t rrtype_code(RrType type) {
  switch (type) {
    case RrType::TXT: return 16;
    case RrType::A: return 1;
    case RrType::AAAA: return 28;
    case RrType::MX: return 15;
    case RrType::PTR: return 12;
    case RrType::SPF: return 99;
  }
  return 16;
}

std::vector<std::uint8_t> encode_query(std::uint16_t id, const DnsQuery& query) {
  Writer w;
  w.u16(id);
  w.u16(kFlagRd);
  w.u16(1);
  w.u16(0);
  w.u16(0);
  w.u16(0);
  w.name(query.name);
  w.u16(rrtype_code(query.type));
  w.u16(kClassIn);
  return w.take();
}

DecodedResponse decode_response(std::span<const std::uint8_t> message, const DnsQuery& query) {
  DecodedResponse out;
  try {
    Reader r(message);
    out.id = r.u16();
    const auto flags = r.u16();
    const auto qdcount = r.u16();
    const auto ancount = r.u16();
    r.u16();
    r.u16();
    if (!(flags & kFlagQr)) throw Malformed("not a response");
    out.truncated = (flags & kFlagTc) != 0;
    for (int i = 0; i < qdcount; ++i) {
      r.name();
      r.u16();
      r.u16();
    }
    const auto rcode = static_cast<std::uint8_t>(flags & 0x0f);
    if (rcode == kRcodeNxDomain) {
      out.answer = DnsAnswer::failure(DnsStatus::NxDomain);
      return out;
    }
    if (rcode != 0) {
      out.answer = DnsAnswer::failure(DnsStatus::ServFail);
      return out;
    }
    std::vector<std::string> records;
    const auto want = rrtype_code(query.type);
    for (int i = 0; i < ancount; ++i) {
      r.name();
      const auto type = r.u16();
      const auto cls = r.u16();
      r.u32();
      const auto rdlen = r.u16();
      if (type == want && cls == kClassIn) {
        records.push_back(decode_rdata(r, type, rdlen));
      } else {
        r.take(rdlen);
      }
    }
    out.answer = DnsAnswer::of(std::move(records));
  } catch (const Malformed&) {
    out.answer = DnsAnswer::failure(DnsStatus::DecodeError);
  }
  return out;
}

std::vector<std::uint8_t> encode_response(std::uint16_t id, const DnsQuery& query, const DnsAnswer& answer,
                                          bool truncated) {
  Writer w;
  std::uint16_t flags = kFlagQr | kFlagRd | kFlagRa;
  if (truncated) flags |= kFlagTc;
  if (answer.status == DnsStatus::NxDomain) flags |= kRcodeNxDomain;
  if (answer.status == DnsStatus::ServFail || answer.status == DnsStatus::Timeout ||
      answer.status == DnsStatus::DecodeError)
    flags |= kRcodeServFail;
  const bool with_records = answer.has_records() && !truncated;
  w.u16(id);
  w.u16(flags);
  w.u16(1);
  w.u16(with_records ? static_cast<std::uint16_t>(answer.records.size()) : 0);
  w.u16(0);
  w.u16(0);
  w.name(query.name);
  w.u16(rrtype_code(query.type));
  w.u16(kClassIn);
  if (with_records) {
    for (const auto& payload : answer.records) {
      w.u16(0xc00c);  // pointer to the question name
      w.u16(rrtype_code(query.type));
      w.u16(kClassIn);
      w.u32(300);
      encode_rdata(w, query.type, payload);
    }
  }
  return w.take();
}

}  // namespace spfaudit::wire

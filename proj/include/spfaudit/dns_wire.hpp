#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spfaudit/dns.hpp"

namespace spfaudit::wire {

std::uint16_t rrtype_code(RrType type);

/// Builds a recursive query (RD set) for one question.
std::vector<std::uint8_t> encode_query(std::uint16_t id, const DnsQuery& query);

struct DecodedResponse {
  std::uint16_t id = 0;
  bool truncated = false;
  DnsAnswer answer;
};

/// Decodes a response to `query`. Malformed messages yield DecodeError.
DecodedResponse decode_response(std::span<const std::uint8_t> message, const DnsQuery& query);

/// Encodes `answer` as a response to `query`. Used by test servers.
std::vector<std::uint8_t> encode_response(std::uint16_t id, const DnsQuery& query, const DnsAnswer& answer,
                                          bool truncated = false);

}  // namespace spfaudit::wire

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "spfaudit/ip.hpp"

namespace spfaudit {

/// Identity of one SMTP transaction as seen by check_host.
struct SessionInput {
  IpAddress client_ip;
  std::string sender;  // "local@domain" or a bare domain; empty means postmaster@<domain>
  std::optional<std::string> helo;
};

/// Domain part of a sender, lowercased; the sender itself when it has no '@'.
std::string sender_domain(std::string_view sender);

/// Expands a macro-string. `exp_context` additionally permits c, r and t.
/// Returns nullopt on an unknown macro letter or malformed macro syntax.
std::optional<std::string> expand_macros(std::string_view tmpl, const SessionInput& input, std::string_view domain,
                                         bool exp_context = false);

/// Drops leftmost labels until the name is at most 253 octets.
std::string truncate_domain(std::string name);

}  // namespace spfaudit

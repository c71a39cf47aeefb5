#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spfaudit/dns.hpp"

namespace spfaudit {

enum class DmarcPolicy { None, Quarantine, Reject };

std::string_view dmarc_policy_name(DmarcPolicy p);
std::optional<DmarcPolicy> dmarc_policy_from_name(std::string_view name);

struct DmarcStatus {
  bool present = false;
  std::optional<DmarcPolicy> policy;
  std::optional<std::string> raw;
  std::vector<std::string> warnings;  // "MultipleRecords", "DnsError", "InvalidPolicy: ..."

  bool operator==(const DmarcStatus&) const = default;
};

/// True if the string's first tag is v=DMARC1.
bool is_dmarc_text(std::string_view txt);

/// Classifies the TXT answer found at _dmarc.<domain>.
DmarcStatus classify_dmarc_answer(const DnsAnswer& answer);

DmarcStatus fetch_dmarc(std::string_view domain, Resolver& resolver);

}  // namespace spfaudit

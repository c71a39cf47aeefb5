#include "spfaudit/dmarc.hpp"

#include <cctype>

namespace spfaudit {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) return false;
  return true;
}

/// Splits "name=value; name=value" into trimmed pairs.
std::vector<std::pair<std::string_view, std::string_view>> tags(std::string_view txt) {
  std::vector<std::pair<std::string_view, std::string_view>> out;
  while (!txt.empty()) {
    const auto semi = txt.find(';');
    auto part = trim(txt.substr(0, semi));
    txt = semi == std::string_view::npos ? std::string_view{} : txt.substr(semi + 1);
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string_view::npos) {
      out.emplace_back(part, std::string_view{});
    } else {
      out.emplace_back(trim(part.substr(0, eq)), trim(part.substr(eq + 1)));
    }
  }
  return out;
}

}  // namespace

std::string_view dmarc_policy_name(DmarcPolicy p) {
  switch (p) {
    case DmarcPolicy::None: return "none";
    case DmarcPolicy::Quarantine: return "quarantine";
    case DmarcPolicy::Reject: return "reject";
  }
  return "none";
}

std::optional<DmarcPolicy> dmarc_policy_from_name(std::string_view name) {
  for (auto p : {DmarcPolicy::None, DmarcPolicy::Quarantine, DmarcPolicy::Reject})
    if (iequals(name, dmarc_policy_name(p))) return p;
  return std::nullopt;
}

bool is_dmarc_text(std::string_view txt) {
  auto t = tags(txt);
  return !t.empty() && iequals(t.front().first, "v") && iequals(t.front().second, "DMARC1");
}

DmarcStatus classify_dmarc_answer(const DnsAnswer& answer) {
  DmarcStatus out;
  if (answer.is_transient()) {
    out.warnings.push_back("DnsError");
    return out;
  }
  std::vector<const std::string*> found;
  for (const auto& txt : answer.records)
    if (is_dmarc_text(txt)) found.push_back(&txt);
  if (found.empty()) return out;
  if (found.size() > 1) {
    out.warnings.push_back("MultipleRecords");
    return out;
  }
  out.present = true;
  out.raw = *found.front();
  for (const auto& [name, value] : tags(*found.front())) {
    if (!iequals(name, "p")) continue;
    out.policy = dmarc_policy_from_name(value);
    if (!out.policy) out.warnings.push_back("InvalidPolicy: " + std::string(value));
    break;
  }
  return out;
}

DmarcStatus fetch_dmarc(std::string_view domain, Resolver& resolver) {
  return classify_dmarc_answer(resolver.resolve({"_dmarc." + normalize_name(domain), RrType::TXT}));
}

}  // namespace spfaudit

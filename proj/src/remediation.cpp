#include <sstream>

#include "spfaudit/corpus.hpp"

namespace spfaudit {

namespace {

std::string quoted(const DomainAudit& audit, const std::string& origin, const SyntaxIssue& issue) {
  if (audit.spf && origin == audit.domain) {
    auto text = issue.span.slice(audit.spf->raw);
    if (!text.empty()) return "`" + std::string(text) + "`";
  }
  return issue.detail.empty() ? std::string("(term not shown)") : "`" + issue.detail + "`";
}

std::string fix_for(SyntaxErrorKind kind) {
  switch (kind) {
    case SyntaxErrorKind::MisspelledIp4: return "write the mechanism as `ip4:` (not `ipv4:`)";
    case SyntaxErrorKind::MisspelledIp6: return "write the mechanism as `ip6:` (not `ipv6:`)";
    case SyntaxErrorKind::BareIpMechanism: return "use `ip4:` for IPv4 or `ip6:` for IPv6 addresses";
    case SyntaxErrorKind::SiteVerificationConcat:
      return "publish the site verification token as its own TXT record, separate from the SPF record";
    case SyntaxErrorKind::MultipleVersionTags:
      return "merge the policies into one record that starts with a single `v=spf1`";
    case SyntaxErrorKind::WhitespaceAfterColon: return "remove the whitespace after `:` or `=`";
    case SyntaxErrorKind::InvalidIpNoAddress: return "add the address after `ip4:`/`ip6:` or remove the term";
    case SyntaxErrorKind::InvalidIpWrongOctets: return "give a full dotted address with four octets, e.g. `ip4:192.0.2.1`";
    case SyntaxErrorKind::InvalidIpDomainArg: return "use `a:<domain>` for host names; `ip4:` takes only addresses";
    case SyntaxErrorKind::InvalidIpWrongVersion: return "use `ip4:` for IPv4 and `ip6:` for IPv6 addresses";
    case SyntaxErrorKind::UnknownTerm: return "correct the term or remove it";
    case SyntaxErrorKind::TrailingGarbageAfterAll: return "remove the text after `all`";
    case SyntaxErrorKind::Other: return "correct the term so it follows the SPF grammar";
  }
  return "correct the term";
}

void describe(std::ostringstream& out, const DomainAudit& audit, const ErrorClass& e) {
  const std::string at = e.domain.empty() ? audit.domain : e.domain;
  out << "- " << e.label() << " at " << at << ": ";
  switch (e.kind) {
    case ErrorKind::RecordNotFound:
      switch (e.cause) {
        case NotFoundCause::MultipleRecords:
          out << "more than one `v=spf1` record is published. Fix: merge them into a single TXT record.";
          break;
        case NotFoundCause::NotExisting:
          out << "the referenced domain does not exist (NXDOMAIN). Fix: remove the include/redirect or correct "
                 "the domain name; an unregistered domain can be taken over.";
          break;
        case NotFoundCause::DecodeError:
          out << "the TXT record is not valid UTF-8. Fix: republish it as plain ASCII.";
          break;
        default:
          out << "no SPF record was found for a referenced domain. Fix: remove the include/redirect or ask the "
                 "owner of " << at << " to publish a record.";
      }
      break;
    case ErrorKind::TooManyLookups:
      out << "the policy needs more than the limit of 10 DNS lookups (include, a, mx, ptr, exists, redirect). "
             "Fix: remove unused includes or replace them with ip4:/ip6: ranges.";
      break;
    case ErrorKind::TooManyVoidLookups:
      out << "more than 2 lookups returned no data. Fix: remove terms that point at names without records.";
      break;
    case ErrorKind::IncludeLoop:
      out << "an include leads back to " << at << ". Fix: remove the include that closes the cycle.";
      break;
    case ErrorKind::RedirectLoop:
      out << "a redirect leads back to " << at << ". Fix: point the redirect at a record that ends the chain.";
      break;
    case ErrorKind::SyntaxError:
    case ErrorKind::InvalidIp:
      out << "the record contains invalid terms.";
      for (const auto& i : e.issues)
        out << "\n    " << syntax_error_name(i.kind) << ": " << quoted(audit, e.domain, i) << ". Fix: " << fix_for(i.kind)
            << '.';
      break;
  }
  out << '\n';
}

}  // namespace

std::optional<std::string> remediation_text(const DomainAudit& audit) {
  const auto& f = audit.flags;
  if (audit.errors.empty() && !f.any()) return std::nullopt;
  std::ostringstream out;
  out << "SPF findings for " << audit.domain << '\n';
  if (audit.spf) out << "Record: " << audit.spf->raw << '\n';
  if (!audit.errors.empty()) {
    out << "Errors:\n";
    for (const auto& e : audit.errors) describe(out, audit, e);
  }
  if (f.any()) out << "Warnings:\n";
  if (f.plus_all) out << "- `+all` authorizes every address on the Internet. Fix: end the record with `-all`.\n";
  if (f.no_restrictive_all && !f.plus_all)
    out << "- the record does not end with a restrictive `all`, so unlisted senders get a neutral result. Fix: end "
           "the record with `-all` (or `~all`).\n";
  for (const auto& i : f.near_miss_terms)
    out << "- " << quoted(audit, audit.domain, i) << " looks like a misspelled `all`. Fix: write "
        << "`-all`.\n";
  for (int p : f.huge_cidr_direct)
    out << "- a /" << p << " range is authorized directly. Fix: list only the hosts that send mail.\n";
  for (int p : f.huge_cidr_via_include)
    out << "- an included record authorizes a /" << p << " range. Fix: check with the provider which hosts it "
        << "really needs.\n";
  if (f.over_100k_ips)
    out << "- more than " << kManyIpsThreshold << " IPv4 addresses are authorized. Fix: review the includes and "
        << "ranges.\n";
  if (f.ptr_used) out << "- the `ptr` mechanism is deprecated. Fix: replace it with `ip4:`, `ip6:` or `a`.\n";
  if (f.deprecated_spf_rrt)
    out << "- a record of the deprecated DNS type SPF is published. Fix: publish the policy only as TXT.\n";
  if (f.abuse_modifiers_present)
    out << "- the record uses the `ra`/`rp`/`rr` reporting modifiers. Note: few receivers support them.\n";
  if (f.markup_suspicious)
    out << "- the record contains markup such as `<script>`. Fix: remove it; web tools may render it.\n";
  return out.str();
}

}  // namespace spfaudit

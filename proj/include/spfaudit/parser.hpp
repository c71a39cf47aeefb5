#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spfaudit/record.hpp"

namespace spfaudit {

/// Classes of malformed SPF text observed in published records.
enum class SyntaxErrorKind {
  MisspelledIp4,           // "ipv4:" instead of "ip4:"
  MisspelledIp6,           // "ipv6:" instead of "ip6:"
  BareIpMechanism,         // "ip:" with no version
  SiteVerificationConcat,  // "...-site-verification=" glued into the record
  MultipleVersionTags,     // more than one "v=spf1" in one string
  WhitespaceAfterColon,    // "ip4: 192.0.2.1", "redirect= example.com"
  InvalidIpNoAddress,
  InvalidIpWrongOctets,
  InvalidIpDomainArg,
  InvalidIpWrongVersion,
  UnknownTerm,
  TrailingGarbageAfterAll,  // warning only
  Other,
};

std::string_view syntax_error_name(SyntaxErrorKind kind);
std::optional<SyntaxErrorKind> syntax_error_from_name(std::string_view name);

/// One of the four InvalidIp* kinds.
bool is_invalid_ip(SyntaxErrorKind kind);

struct SyntaxIssue {
  SyntaxErrorKind kind = SyntaxErrorKind::Other;
  Span span;
  std::string detail;

  bool operator==(const SyntaxIssue&) const = default;
};

enum class ParseMode { Strict, Lenient };

enum class ParseStatus {
  Ok,       // syntactically valid; warnings may still be present
  Invalid,  // at least one error
  NotSpf,   // does not start with the version tag: "no record", not a syntax error
};

struct ParseResult {
  ParseStatus status = ParseStatus::NotSpf;
  /// Strict: set only when status is Ok. Lenient: best-effort partial record
  /// whenever the input is SPF at all.
  std::optional<SpfRecord> record;
  std::vector<SyntaxIssue> errors;
  std::vector<SyntaxIssue> warnings;

  bool ok() const { return status == ParseStatus::Ok; }
};

ParseResult parse_spf(std::string_view raw, ParseMode mode = ParseMode::Strict);

/// "v=spf1" (any case) followed by a space or the end of the string.
bool is_spf_text(std::string_view txt);

struct SpfLookupOutcome {
  enum class Kind { Found, Missing, Multiple };
  Kind kind = Kind::Missing;
  std::string raw;     // Found only
  std::size_t count = 0;  // number of SPF strings

  bool operator==(const SpfLookupOutcome&) const = default;
};

SpfLookupOutcome classify_txt_set(std::span<const std::string> txt_records);

/// Flags angle-bracketed markup such as "<script>" inside a TXT payload.
bool detect_embedded_markup(std::string_view raw);

}  // namespace spfaudit

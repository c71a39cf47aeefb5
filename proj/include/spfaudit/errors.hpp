#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spfaudit/parser.hpp"

namespace spfaudit {

enum class ErrorKind {
  RecordNotFound,
  TooManyLookups,
  TooManyVoidLookups,
  SyntaxError,
  IncludeLoop,
  RedirectLoop,
  InvalidIp,
};

enum class NotFoundCause {
  SpfMissing,       // TXT answer without a v=spf1 string
  NotExisting,      // NXDOMAIN
  MultipleRecords,  // two or more v=spf1 strings
  EmptyAnswer,      // NODATA
  DnsError,         // timeout or SERVFAIL
  LabelTooLong,
  NameTooLong,
  DecodeError,
};

std::string_view error_kind_name(ErrorKind kind);
std::optional<ErrorKind> error_kind_from_name(std::string_view name);
std::string_view not_found_cause_name(NotFoundCause cause);
std::optional<NotFoundCause> not_found_cause_from_name(std::string_view name);

/// One classified error, attached to the record (domain) where it arose.
struct ErrorClass {
  ErrorKind kind = ErrorKind::RecordNotFound;
  NotFoundCause cause = NotFoundCause::SpfMissing;  // RecordNotFound
  std::vector<SyntaxIssue> issues;                  // SyntaxError, InvalidIp
  int depth = 0;                                    // IncludeLoop
  std::string domain;
  std::string detail;

  static ErrorClass not_found(NotFoundCause cause, std::string domain);
  static ErrorClass too_many_lookups(std::string domain, std::string detail = {});
  static ErrorClass too_many_void_lookups(std::string domain);
  static ErrorClass include_loop(int depth, std::string domain);
  static ErrorClass redirect_loop(std::string domain);
  /// SyntaxError, or InvalidIp when the first issue by position is an
  /// InvalidIp* kind. `issues` must be non-empty.
  static ErrorClass syntax(std::vector<SyntaxIssue> issues, std::string domain);

  /// Subtype labels for histograms: the cause, the syntax kinds, or the
  /// loop depth. Empty for classes without subtypes.
  std::vector<std::string> subtypes() const;

  /// "RecordNotFound(SpfMissing)", "IncludeLoop(1)", "SyntaxError(MisspelledIp4)".
  std::string label() const;

  bool operator==(const ErrorClass&) const = default;
};

/// Splits parse errors into a SyntaxError entry (non-IP issues) and an
/// InvalidIp entry (InvalidIp* issues); either may be absent.
std::vector<ErrorClass> classify_parse_errors(const std::vector<SyntaxIssue>& errors, const std::string& domain);

}  // namespace spfaudit

#include "spfaudit/errors.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace spfaudit {

namespace {

constexpr std::array<std::pair<ErrorKind, std::string_view>, 7> kKinds{{
    {ErrorKind::RecordNotFound, "RecordNotFound"},
    {ErrorKind::TooManyLookups, "TooManyLookups"},
    {ErrorKind::TooManyVoidLookups, "TooManyVoidLookups"},
    {ErrorKind::SyntaxError, "SyntaxError"},
    {ErrorKind::IncludeLoop, "IncludeLoop"},
    {ErrorKind::RedirectLoop, "RedirectLoop"},
    {ErrorKind::InvalidIp, "InvalidIp"},
}};

constexpr std::array<std::pair<NotFoundCause, std::string_view>, 8> kCauses{{
    {NotFoundCause::SpfMissing, "SpfMissing"},
    {NotFoundCause::NotExisting, "NotExisting"},
    {NotFoundCause::MultipleRecords, "MultipleRecords"},
    {NotFoundCause::EmptyAnswer, "EmptyAnswer"},
    {NotFoundCause::DnsError, "DnsError"},
    {NotFoundCause::LabelTooLong, "LabelTooLong"},
    {NotFoundCause::NameTooLong, "NameTooLong"},
    {NotFoundCause::DecodeError, "DecodeError"},
}};

}  // namespace

std::string_view error_kind_name(ErrorKind kind) {
  for (const auto& [k, n] : kKinds)
    if (k == kind) return n;
  return "Unknown";
}

std::optional<ErrorKind> error_kind_from_name(std::string_view name) {
  for (const auto& [k, n] : kKinds)
    if (n == name) return k;
  return std::nullopt;
}

std::string_view not_found_cause_name(NotFoundCause cause) {
  for (const auto& [c, n] : kCauses)
    if (c == cause) return n;
  return "Unknown";
}

std::optional<NotFoundCause> not_found_cause_from_name(std::string_view name) {
  for (const auto& [c, n] : kCauses)
    if (n == name) return c;
  return std::nullopt;
}

ErrorClass ErrorClass::not_found(NotFoundCause cause, std::string domain) {
  ErrorClass e;
  e.kind = ErrorKind::RecordNotFound;
  e.cause = cause;
  e.domain = std::move(domain);
  return e;
}

ErrorClass ErrorClass::too_many_lookups(std::string domain, std::string detail) {
  ErrorClass e;
  e.kind = ErrorKind::TooManyLookups;
  e.domain = std::move(domain);
  e.detail = std::move(detail);
  return e;
}

ErrorClass ErrorClass::too_many_void_lookups(std::string domain) {
  ErrorClass e;
  e.kind = ErrorKind::TooManyVoidLookups;
  e.domain = std::move(domain);
  return e;
}

ErrorClass ErrorClass::include_loop(int depth, std::string domain) {
  ErrorClass e;
  e.kind = ErrorKind::IncludeLoop;
  e.depth = depth;
  e.domain = std::move(domain);
  return e;
}

ErrorClass ErrorClass::redirect_loop(std::string domain) {
  ErrorClass e;
  e.kind = ErrorKind::RedirectLoop;
  e.domain = std::move(domain);
  return e;
}

ErrorClass ErrorClass::syntax(std::vector<SyntaxIssue> issues, std::string domain) {
  ErrorClass e;
  e.kind = !issues.empty() && is_invalid_ip(issues.front().kind) ? ErrorKind::InvalidIp : ErrorKind::SyntaxError;
  e.issues = std::move(issues);
  e.domain = std::move(domain);
  return e;
}

std::vector<std::string> ErrorClass::subtypes() const {
  std::vector<std::string> out;
  switch (kind) {
    case ErrorKind::RecordNotFound:
      out.emplace_back(not_found_cause_name(cause));
      break;
    case ErrorKind::SyntaxError:
    case ErrorKind::InvalidIp:
      for (const auto& issue : issues) {
        std::string name(syntax_error_name(issue.kind));
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
      }
      break;
    case ErrorKind::IncludeLoop:
      out.push_back(depth == 0 ? "Direct" : "Depth" + std::to_string(depth));
      break;
    default:
      break;
  }
  return out;
}

std::string ErrorClass::label() const {
  std::string out(error_kind_name(kind));
  switch (kind) {
    case ErrorKind::RecordNotFound:
      out += '(' + std::string(not_found_cause_name(cause)) + ')';
      break;
    case ErrorKind::SyntaxError:
    case ErrorKind::InvalidIp:
      if (!issues.empty()) out += '(' + std::string(syntax_error_name(issues.front().kind)) + ')';
      break;
    case ErrorKind::IncludeLoop:
      out += '(' + std::to_string(depth) + ')';
      break;
    default:
      break;
  }
  return out;
}

std::vector<ErrorClass> classify_parse_errors(const std::vector<SyntaxIssue>& errors, const std::string& domain) {
  std::vector<SyntaxIssue> syntax, invalid_ip;
  for (const auto& e : errors) (is_invalid_ip(e.kind) ? invalid_ip : syntax).push_back(e);
  std::vector<ErrorClass> out;
  if (!syntax.empty()) out.push_back(ErrorClass::syntax(std::move(syntax), domain));
  if (!invalid_ip.empty()) out.push_back(ErrorClass::syntax(std::move(invalid_ip), domain));
  return out;
}

}  // namespace spfaudit

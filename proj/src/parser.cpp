#include "spfaudit/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <regex>

namespace spfaudit {

namespace {

constexpr std::string_view kVersionTag = "v=spf1";

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(),
                                            [](char x, char y) { return lower(x) == lower(y); });
}

std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i)
    if (iequals(hay.substr(i, needle.size()), needle)) return i;
  return std::string_view::npos;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

struct Token {
  std::string_view text;
  Span span;
};

std::vector<Token> tokenize(std::string_view raw, std::size_t from) {
  std::vector<Token> out;
  std::size_t i = from;
  while (i < raw.size()) {
    while (i < raw.size() && is_space(raw[i])) ++i;
    const std::size_t start = i;
    while (i < raw.size() && !is_space(raw[i])) ++i;
    if (i > start) out.push_back({raw.substr(start, i - start), {start, i}});
  }
  return out;
}

constexpr std::array<std::string_view, 8> kMechanismNames = {"all", "include", "a",   "mx",
                                                             "ptr", "ip4",     "ip6", "exists"};

bool is_mechanism_name(std::string_view name) {
  return std::find(kMechanismNames.begin(), kMechanismNames.end(), name) != kMechanismNames.end();
}

bool valid_modifier_name(std::string_view name) {
  if (name.empty() || !std::isalpha(static_cast<unsigned char>(name[0]))) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

std::optional<Qualifier> qualifier_of(char c) {
  switch (c) {
    case '+': return Qualifier::Pass;
    case '-': return Qualifier::Fail;
    case '~': return Qualifier::SoftFail;
    case '?': return Qualifier::Neutral;
    default: return std::nullopt;
  }
}

/// Splits a term body into its name and the remainder starting at the
/// first ':', '/' or '='.
std::pair<std::string_view, std::string_view> split_name(std::string_view body) {
  const auto pos = body.find_first_of(":/=");
  if (pos == std::string_view::npos) return {body, {}};
  return {body.substr(0, pos), body.substr(pos)};
}

bool looks_like_term(std::string_view token) {
  if (!token.empty() && qualifier_of(token[0])) token.remove_prefix(1);
  auto [name, rest] = split_name(token);
  const auto lname = to_lower(name);
  if (is_mechanism_name(lname)) return rest.empty() || rest[0] != '=';
  return !rest.empty() && rest[0] == '=' && valid_modifier_name(name);
}

/// Checks the macro-string grammar: every '%' starts a valid escape or a
/// braced macro with balanced delimiters.
bool valid_macro_string(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (static_cast<unsigned char>(c) < 0x21 || static_cast<unsigned char>(c) > 0x7e) return false;
    if (c != '%') continue;
    if (i + 1 >= s.size()) return false;
    const char n = s[i + 1];
    if (n == '%' || n == '_' || n == '-') {
      ++i;
      continue;
    }
    if (n != '{') return false;
    const auto close = s.find('}', i + 2);
    if (close == std::string_view::npos) return false;
    auto body = s.substr(i + 2, close - i - 2);
    if (body.empty() || !std::isalpha(static_cast<unsigned char>(body[0]))) return false;
    for (char b : body.substr(1))
      if (!std::isalnum(static_cast<unsigned char>(b)) && std::string_view(".-+,/_=").find(b) == std::string_view::npos)
        return false;
    i = close;
  }
  return true;
}

bool valid_domain_spec(std::string_view s) {
  if (s.empty()) return false;
  if (has_macro(s)) return valid_macro_string(s);
  if (s.size() > 255) return true;  // length errors surface at resolution time
  std::size_t label = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '.') {
      if (label == 0 && i + 1 != s.size()) return false;
      label = 0;
      continue;
    }
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
    ++label;
  }
  return true;
}

std::optional<int> parse_int(std::string_view s, int max) {
  if (s.empty() || s.size() > 3) return std::nullopt;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v < 0 || v > max) return std::nullopt;
  return v;
}

bool digits_and_dots(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
  });
}

bool has_alpha(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

class Parser {
 public:
  explicit Parser(std::string_view raw) : raw_(raw) {}

  ParseResult run(ParseMode mode) {
    ParseResult result;
    if (!is_spf_text(raw_)) return result;

    record_.raw = std::string(raw_);
    tokens_ = tokenize(raw_, kVersionTag.size());

    for (auto pos = ifind(raw_, kVersionTag, 1); pos != std::string_view::npos;
         pos = ifind(raw_, kVersionTag, pos + 1)) {
      error(SyntaxErrorKind::MultipleVersionTags, {pos, pos + kVersionTag.size()}, "repeated v=spf1");
    }

    bool after_all = false;
    for (idx_ = 0; idx_ < tokens_.size(); ++idx_) {
      const Token& tok = tokens_[idx_];
      if (after_all && !trailing_reported_) {
        warnings_.push_back({SyntaxErrorKind::TrailingGarbageAfterAll,
                             {tok.span.begin, tokens_.back().span.end},
                             "terms after 'all' are ignored"});
        trailing_reported_ = true;
      }
      if (ifind(tok.text, kVersionTag) != std::string_view::npos) continue;
      if (auto sv = ifind(tok.text, "-site-verification"); sv != std::string_view::npos) {
        error(SyntaxErrorKind::SiteVerificationConcat, tok.span, std::string(tok.text));
        continue;
      }
      parse_term(tok);
      if (!record_.terms.empty() && record_.terms.back().span == tok.span) {
        if (auto* d = record_.terms.back().directive(); d && std::holds_alternative<mech::All>(d->mechanism))
          after_all = true;
      }
    }

    std::sort(errors_.begin(), errors_.end(),
              [](const SyntaxIssue& a, const SyntaxIssue& b) { return a.span.begin < b.span.begin; });
    result.status = errors_.empty() ? ParseStatus::Ok : ParseStatus::Invalid;
    result.errors = std::move(errors_);
    result.warnings = std::move(warnings_);
    if (result.status == ParseStatus::Ok || mode == ParseMode::Lenient) result.record = std::move(record_);
    return result;
  }

 private:
  void error(SyntaxErrorKind kind, Span span, std::string detail) {
    errors_.push_back({kind, span, std::move(detail)});
  }

  /// When an argument is empty because whitespace followed ':' or '=', the
  /// next token is taken as the argument. Returns it, or nullopt.
  std::optional<Token> take_detached_argument(const Token& tok) {
    if (idx_ + 1 >= tokens_.size()) return std::nullopt;
    const Token& next = tokens_[idx_ + 1];
    if (looks_like_term(next.text)) return std::nullopt;
    ++idx_;
    error(SyntaxErrorKind::WhitespaceAfterColon, {tok.span.begin, next.span.end},
          std::string(raw_.substr(tok.span.begin, next.span.end - tok.span.begin)));
    return next;
  }

  void push_directive(const Token& tok, Qualifier q, bool explicit_q, Mechanism m) {
    record_.terms.push_back({Directive{q, explicit_q, std::move(m)}, tok.span});
  }

  void parse_term(const Token& tok) {
    std::string_view body = tok.text;
    Qualifier q = Qualifier::Pass;
    bool explicit_q = false;
    if (auto parsed = qualifier_of(body[0])) {
      q = *parsed;
      explicit_q = true;
      body.remove_prefix(1);
    }
    auto [name, rest] = split_name(body);
    const std::string lname = to_lower(name);

    if (lname == "ipv4" || lname == "ipv6" || lname == "ip") {
      const auto kind = lname == "ipv4"   ? SyntaxErrorKind::MisspelledIp4
                        : lname == "ipv6" ? SyntaxErrorKind::MisspelledIp6
                                          : SyntaxErrorKind::BareIpMechanism;
      error(kind, tok.span, std::string(tok.text));
      if ((rest == ":" || rest == "=") && idx_ + 1 < tokens_.size() && !looks_like_term(tokens_[idx_ + 1].text))
        ++idx_;
      return;
    }

    if (!rest.empty() && rest[0] == '=') {
      if (is_mechanism_name(lname)) {
        error(SyntaxErrorKind::Other, tok.span, "mechanism written with '=': " + std::string(tok.text));
        return;
      }
      parse_modifier(tok, explicit_q, name, rest.substr(1));
      return;
    }

    if (!is_mechanism_name(lname)) {
      error(SyntaxErrorKind::UnknownTerm, tok.span, std::string(tok.text));
      return;
    }

    // Detached argument: "ip4: 192.0.2.1".
    std::string detached;
    if (rest == ":") {
      if (auto next = take_detached_argument(tok)) {
        detached = ":" + std::string(next->text);
        rest = detached;
      }
    }

    if (lname == "all") {
      if (!rest.empty()) {
        error(SyntaxErrorKind::Other, tok.span, "'all' takes no argument");
        return;
      }
      push_directive(tok, q, explicit_q, mech::All{});
    } else if (lname == "include" || lname == "exists") {
      if (rest.size() < 2 || rest[0] != ':') {
        error(SyntaxErrorKind::Other, tok.span, lname + " requires a domain argument");
        return;
      }
      auto domain = rest.substr(1);
      if (!valid_domain_spec(domain)) {
        error(SyntaxErrorKind::Other, tok.span, "invalid domain-spec: " + std::string(domain));
        return;
      }
      if (lname == "include")
        push_directive(tok, q, explicit_q, mech::Include{std::string(domain)});
      else
        push_directive(tok, q, explicit_q, mech::Exists{std::string(domain)});
    } else if (lname == "a" || lname == "mx") {
      auto spec = parse_host_spec(tok, rest);
      if (!spec) return;
      if (lname == "a")
        push_directive(tok, q, explicit_q, mech::A{*spec});
      else
        push_directive(tok, q, explicit_q, mech::Mx{*spec});
    } else if (lname == "ptr") {
      mech::Ptr ptr;
      if (!rest.empty()) {
        if (rest[0] != ':' || !valid_domain_spec(rest.substr(1))) {
          error(SyntaxErrorKind::Other, tok.span, "invalid ptr argument");
          return;
        }
        ptr.domain = std::string(rest.substr(1));
      }
      push_directive(tok, q, explicit_q, std::move(ptr));
    } else if (lname == "ip4") {
      parse_ip4(tok, q, explicit_q, rest);
    } else if (lname == "ip6") {
      parse_ip6(tok, q, explicit_q, rest);
    }
  }

  std::optional<mech::HostSpec> parse_host_spec(const Token& tok, std::string_view rest) {
    mech::HostSpec spec;
    if (!rest.empty() && rest[0] == ':') {
      rest.remove_prefix(1);
      const auto slash = rest.find('/');
      auto domain = rest.substr(0, slash);
      if (!valid_domain_spec(domain)) {
        error(SyntaxErrorKind::Other, tok.span,
              domain.empty() ? "empty domain-spec" : "invalid domain-spec: " + std::string(domain));
        return std::nullopt;
      }
      spec.domain = std::string(domain);
      rest = slash == std::string_view::npos ? std::string_view{} : rest.substr(slash);
    }
    if (rest.empty()) return spec;
    // "/c4", "//c6" or "/c4//c6"
    const auto dual = rest.find("//");
    auto v4 = rest.substr(0, dual);
    auto v6 = dual == std::string_view::npos ? std::string_view{} : rest.substr(dual + 2);
    if (!v4.empty()) {
      auto n = v4[0] == '/' ? parse_int(v4.substr(1), 32) : std::nullopt;
      if (!n) {
        error(SyntaxErrorKind::Other, tok.span, "invalid ip4-cidr-length");
        return std::nullopt;
      }
      spec.cidr4 = n;
    }
    if (dual != std::string_view::npos) {
      auto n = parse_int(v6, 128);
      if (!n) {
        error(SyntaxErrorKind::Other, tok.span, "invalid ip6-cidr-length");
        return std::nullopt;
      }
      spec.cidr6 = n;
    }
    return spec;
  }

  void parse_ip4(const Token& tok, Qualifier q, bool explicit_q, std::string_view rest) {
    if (rest.empty() || rest[0] != ':' || rest.size() == 1) {
      error(SyntaxErrorKind::InvalidIpNoAddress, tok.span, std::string(tok.text));
      return;
    }
    auto arg = rest.substr(1);
    const auto slash = arg.find('/');
    auto addr_text = arg.substr(0, slash);
    if (addr_text.empty()) {
      error(SyntaxErrorKind::InvalidIpNoAddress, tok.span, std::string(tok.text));
      return;
    }
    auto addr = Ipv4::parse(addr_text);
    if (!addr) {
      if (addr_text.find(':') != std::string_view::npos && Ipv6::parse(addr_text))
        error(SyntaxErrorKind::InvalidIpWrongVersion, tok.span, std::string(addr_text));
      else if (digits_and_dots(addr_text) &&
               std::count(addr_text.begin(), addr_text.end(), '.') != 3)
        error(SyntaxErrorKind::InvalidIpWrongOctets, tok.span, std::string(addr_text));
      else if (has_alpha(addr_text) && addr_text.find(':') == std::string_view::npos)
        error(SyntaxErrorKind::InvalidIpDomainArg, tok.span, std::string(addr_text));
      else
        error(SyntaxErrorKind::Other, tok.span, "malformed IPv4 address: " + std::string(addr_text));
      return;
    }
    int prefix = 32;
    if (slash != std::string_view::npos) {
      auto n = parse_int(arg.substr(slash + 1), 32);
      if (!n) {
        error(SyntaxErrorKind::Other, tok.span, "invalid ip4-cidr-length");
        return;
      }
      prefix = *n;
    }
    push_directive(tok, q, explicit_q, mech::Ip4{*addr, prefix});
  }

  void parse_ip6(const Token& tok, Qualifier q, bool explicit_q, std::string_view rest) {
    if (rest.empty() || rest[0] != ':' || rest.size() == 1) {
      error(SyntaxErrorKind::InvalidIpNoAddress, tok.span, std::string(tok.text));
      return;
    }
    auto arg = rest.substr(1);
    const auto slash = arg.find('/');
    auto addr_text = arg.substr(0, slash);
    if (addr_text.empty()) {
      error(SyntaxErrorKind::InvalidIpNoAddress, tok.span, std::string(tok.text));
      return;
    }
    auto addr = Ipv6::parse(addr_text);
    if (!addr) {
      if (Ipv4::parse(addr_text))
        error(SyntaxErrorKind::InvalidIpWrongVersion, tok.span, std::string(addr_text));
      else if (addr_text.find(':') == std::string_view::npos && has_alpha(addr_text))
        error(SyntaxErrorKind::InvalidIpDomainArg, tok.span, std::string(addr_text));
      else
        error(SyntaxErrorKind::Other, tok.span, "malformed IPv6 address: " + std::string(addr_text));
      return;
    }
    int prefix = 128;
    if (slash != std::string_view::npos) {
      auto n = parse_int(arg.substr(slash + 1), 128);
      if (!n) {
        error(SyntaxErrorKind::Other, tok.span, "invalid ip6-cidr-length");
        return;
      }
      prefix = *n;
    }
    push_directive(tok, q, explicit_q, mech::Ip6{*addr, prefix});
  }

  void parse_modifier(const Token& tok, bool explicit_q, std::string_view name, std::string_view value) {
    if (explicit_q || !valid_modifier_name(name)) {
      error(SyntaxErrorKind::UnknownTerm, tok.span, std::string(tok.text));
      return;
    }
    const std::string lname = to_lower(name);
    std::string detached;
    if (value.empty()) {
      if (auto next = take_detached_argument(tok)) {
        detached = std::string(next->text);
        value = detached;
      }
    }
    if (lname == "redirect" || lname == "exp") {
      if (record_.find_modifier(lname)) {
        error(SyntaxErrorKind::Other, tok.span, "duplicate " + lname + " modifier");
        return;
      }
      if (!valid_domain_spec(value)) {
        error(SyntaxErrorKind::Other, tok.span, "invalid " + lname + " target");
        return;
      }
    } else if (!value.empty() && !valid_macro_string(value)) {
      error(SyntaxErrorKind::Other, tok.span, "invalid macro-string in modifier " + lname);
      return;
    }
    record_.terms.push_back({Modifier{lname, std::string(value)}, tok.span});
  }

  std::string_view raw_;
  std::vector<Token> tokens_;
  std::size_t idx_ = 0;
  SpfRecord record_;
  std::vector<SyntaxIssue> errors_;
  std::vector<SyntaxIssue> warnings_;
  bool trailing_reported_ = false;
};

}  // namespace

std::string_view syntax_error_name(SyntaxErrorKind kind) {
  switch (kind) {
    case SyntaxErrorKind::MisspelledIp4: return "MisspelledIp4";
    case SyntaxErrorKind::MisspelledIp6: return "MisspelledIp6";
    case SyntaxErrorKind::BareIpMechanism: return "BareIpMechanism";
    case SyntaxErrorKind::SiteVerificationConcat: return "SiteVerificationConcat";
    case SyntaxErrorKind::MultipleVersionTags: return "MultipleVersionTags";
    case SyntaxErrorKind::WhitespaceAfterColon: return "WhitespaceAfterColon";
    case SyntaxErrorKind::InvalidIpNoAddress: return "InvalidIpNoAddress";
    case SyntaxErrorKind::InvalidIpWrongOctets: return "InvalidIpWrongOctets";
    case SyntaxErrorKind::InvalidIpDomainArg: return "InvalidIpDomainArg";
    case SyntaxErrorKind::InvalidIpWrongVersion: return "InvalidIpWrongVersion";
    case SyntaxErrorKind::UnknownTerm: return "UnknownTerm";
    case SyntaxErrorKind::TrailingGarbageAfterAll: return "TrailingGarbageAfterAll";
    case SyntaxErrorKind::Other: return "Other";
  }
  return "Other";
}

std::optional<SyntaxErrorKind> syntax_error_from_name(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(SyntaxErrorKind::Other); ++k) {
    auto kind = static_cast<SyntaxErrorKind>(k);
    if (syntax_error_name(kind) == name) return kind;
  }
  return std::nullopt;
}

bool is_invalid_ip(SyntaxErrorKind kind) {
  return kind == SyntaxErrorKind::InvalidIpNoAddress || kind == SyntaxErrorKind::InvalidIpWrongOctets ||
         kind == SyntaxErrorKind::InvalidIpDomainArg || kind == SyntaxErrorKind::InvalidIpWrongVersion;
}

bool is_spf_text(std::string_view txt) {
  return txt.size() >= kVersionTag.size() && iequals(txt.substr(0, kVersionTag.size()), kVersionTag) &&
         (txt.size() == kVersionTag.size() || txt[kVersionTag.size()] == ' ');
}

ParseResult parse_spf(std::string_view raw, ParseMode mode) { return Parser(raw).run(mode); }

SpfLookupOutcome classify_txt_set(std::span<const std::string> txt_records) {
  SpfLookupOutcome out;
  for (const auto& txt : txt_records) {
    if (!is_spf_text(txt)) continue;
    if (++out.count == 1) out.raw = txt;
  }
  if (out.count == 1) {
    out.kind = SpfLookupOutcome::Kind::Found;
  } else if (out.count > 1) {
    out.kind = SpfLookupOutcome::Kind::Multiple;
    out.raw.clear();
  }
  return out;
}

bool detect_embedded_markup(std::string_view raw) {
  static const std::regex markup(R"(<\s*/?\s*[A-Za-z][A-Za-z0-9]*(\s[^<>]*)?/?\s*>)");
  return std::regex_search(raw.begin(), raw.end(), markup);
}

}  // namespace spfaudit

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spfaudit/ip.hpp"

namespace spfaudit {

/// Half-open byte range [begin, end) into a raw record.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::string_view slice(std::string_view raw) const {
    if (begin >= raw.size()) return {};
    return raw.substr(begin, std::min(end, raw.size()) - begin);
  }
  bool operator==(const Span&) const = default;
};

enum class Qualifier { Pass, Fail, SoftFail, Neutral };

char qualifier_char(Qualifier q);
std::string_view qualifier_name(Qualifier q);

namespace mech {

struct All {
  bool operator==(const All&) const = default;
};
struct Include {
  std::string domain;
  bool operator==(const Include&) const = default;
};
/// Shared shape of `a` and `mx`: optional domain-spec plus dual CIDR lengths.
struct HostSpec {
  std::optional<std::string> domain;
  std::optional<int> cidr4;
  std::optional<int> cidr6;
  bool operator==(const HostSpec&) const = default;
};
struct A : HostSpec {
  bool operator==(const A&) const = default;
};
struct Mx : HostSpec {
  bool operator==(const Mx&) const = default;
};
struct Ptr {
  std::optional<std::string> domain;
  bool operator==(const Ptr&) const = default;
};
struct Ip4 {
  Ipv4 addr;
  int prefix = 32;
  bool operator==(const Ip4&) const = default;
};
struct Ip6 {
  Ipv6 addr;
  int prefix = 128;
  bool operator==(const Ip6&) const = default;
};
struct Exists {
  std::string domain;
  bool operator==(const Exists&) const = default;
};

}  // namespace mech

using Mechanism =
    std::variant<mech::All, mech::Include, mech::A, mech::Mx, mech::Ptr, mech::Ip4, mech::Ip6, mech::Exists>;

std::string_view mechanism_name(const Mechanism& m);

/// Mechanisms whose evaluation costs a DNS lookup.
bool counts_lookup(const Mechanism& m);

struct Directive {
  Qualifier qualifier = Qualifier::Pass;
  /// Whether the qualifier character was written in the source.
  bool explicit_qualifier = false;
  Mechanism mechanism;

  bool operator==(const Directive&) const = default;
};

struct Modifier {
  std::string name;  // lowercase
  std::string value;

  bool operator==(const Modifier&) const = default;
};

struct Term {
  std::variant<Directive, Modifier> kind;
  Span span;

  const Directive* directive() const { return std::get_if<Directive>(&kind); }
  const Modifier* modifier() const { return std::get_if<Modifier>(&kind); }

  /// Structural equality; source spans are not compared.
  bool same_as(const Term& other) const { return kind == other.kind; }
};

struct SpfRecord {
  std::string raw;
  std::vector<Term> terms;

  const Modifier* find_modifier(std::string_view name) const;

  /// Structural equality of the term lists.
  bool same_terms(const SpfRecord& other) const;
};

/// Canonical single-space text form.
std::string render(const SpfRecord& record);
std::string render(const Term& term);

/// True if `text` contains an unescaped macro ("%{", "%%", "%_", "%-").
bool has_macro(std::string_view text);

}  // namespace spfaudit

#include "spfaudit/record.hpp"

namespace spfaudit {

char qualifier_char(Qualifier q) {
  switch (q) {
    case Qualifier::Pass: return '+';
    case Qualifier::Fail: return '-';
    case Qualifier::SoftFail: return '~';
    case Qualifier::Neutral: return '?';
  }
  return '+';
}

std::string_view qualifier_name(Qualifier q) {
  switch (q) {
    case Qualifier::Pass: return "pass";
    case Qualifier::Fail: return "fail";
    case Qualifier::SoftFail: return "softfail";
    case Qualifier::Neutral: return "neutral";
  }
  return "pass";
}

namespace {

struct NameVisitor {
  std::string_view operator()(const mech::All&) const { return "all"; }
  std::string_view operator()(const mech::Include&) const { return "include"; }
  std::string_view operator()(const mech::A&) const { return "a"; }
  std::string_view operator()(const mech::Mx&) const { return "mx"; }
  std::string_view operator()(const mech::Ptr&) const { return "ptr"; }
  std::string_view operator()(const mech::Ip4&) const { return "ip4"; }
  std::string_view operator()(const mech::Ip6&) const { return "ip6"; }
  std::string_view operator()(const mech::Exists&) const { return "exists"; }
};

void append_host_spec(std::string& out, const mech::HostSpec& spec) {
  if (spec.domain) out += ':' + *spec.domain;
  if (spec.cidr4) out += '/' + std::to_string(*spec.cidr4);
  if (spec.cidr6) out += "//" + std::to_string(*spec.cidr6);
}

struct RenderVisitor {
  std::string& out;
  void operator()(const mech::All&) const { out += "all"; }
  void operator()(const mech::Include& m) const { out += "include:" + m.domain; }
  void operator()(const mech::A& m) const {
    out += "a";
    append_host_spec(out, m);
  }
  void operator()(const mech::Mx& m) const {
    out += "mx";
    append_host_spec(out, m);
  }
  void operator()(const mech::Ptr& m) const {
    out += "ptr";
    if (m.domain) out += ':' + *m.domain;
  }
  void operator()(const mech::Ip4& m) const {
    out += "ip4:" + m.addr.to_string();
    if (m.prefix != 32) out += '/' + std::to_string(m.prefix);
  }
  void operator()(const mech::Ip6& m) const {
    out += "ip6:" + m.addr.to_string();
    if (m.prefix != 128) out += '/' + std::to_string(m.prefix);
  }
  void operator()(const mech::Exists& m) const { out += "exists:" + m.domain; }
};

}  // namespace

std::string_view mechanism_name(const Mechanism& m) { return std::visit(NameVisitor{}, m); }

bool counts_lookup(const Mechanism& m) {
  return std::holds_alternative<mech::Include>(m) || std::holds_alternative<mech::A>(m) ||
         std::holds_alternative<mech::Mx>(m) || std::holds_alternative<mech::Ptr>(m) ||
         std::holds_alternative<mech::Exists>(m);
}

const Modifier* SpfRecord::find_modifier(std::string_view name) const {
  for (const auto& t : terms)
    if (auto* m = t.modifier(); m && m->name == name) return m;
  return nullptr;
}

bool SpfRecord::same_terms(const SpfRecord& other) const {
  if (terms.size() != other.terms.size()) return false;
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (!terms[i].same_as(other.terms[i])) return false;
  return true;
}

std::string render(const Term& term) {
  std::string out;
  if (auto* d = term.directive()) {
    if (d->explicit_qualifier || d->qualifier != Qualifier::Pass) out += qualifier_char(d->qualifier);
    std::visit(RenderVisitor{out}, d->mechanism);
  } else if (auto* m = term.modifier()) {
    out += m->name + '=' + m->value;
  }
  return out;
}

std::string render(const SpfRecord& record) {
  std::string out = "v=spf1";
  for (const auto& t : record.terms) out += ' ' + render(t);
  return out;
}

bool has_macro(std::string_view text) {
  return text.find('%') != std::string_view::npos;
}

}  // namespace spfaudit

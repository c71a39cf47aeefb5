#include "spfaudit/eval.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <map>

#include "spfaudit/parser.hpp"

namespace spfaudit {

namespace {

constexpr std::array<std::pair<SpfResult, std::string_view>, 7> kResults{{
    {SpfResult::None, "None"},
    {SpfResult::Neutral, "Neutral"},
    {SpfResult::Pass, "Pass"},
    {SpfResult::Fail, "Fail"},
    {SpfResult::SoftFail, "SoftFail"},
    {SpfResult::TempError, "TempError"},
    {SpfResult::PermError, "PermError"},
}};

bool counts_term(const Term& term) {
  if (const auto* d = term.directive()) return counts_lookup(d->mechanism);
  return term.modifier()->name == "redirect";
}

std::string reverse_name(const IpAddress& ip) {
  if (const auto* v4 = std::get_if<Ipv4>(&ip)) {
    const auto v = v4->value();
    return std::to_string(v & 0xff) + '.' + std::to_string((v >> 8) & 0xff) + '.' + std::to_string((v >> 16) & 0xff) +
           '.' + std::to_string(v >> 24) + ".in-addr.arpa";
  }
  static constexpr char kHex[] = "0123456789abcdef";
  const auto& b = std::get<Ipv6>(ip).bytes();
  std::string out;
  for (int i = 15; i >= 0; --i) {
    out += kHex[b[i] & 0xf];
    out += '.';
    out += kHex[b[i] >> 4];
    out += '.';
  }
  return out + "ip6.arpa";
}

bool addr_matches(const IpAddress& client, std::string_view payload, int cidr4, int cidr6) {
  if (const auto* v4 = std::get_if<Ipv4>(&client)) {
    auto a = Ipv4::parse(payload);
    return a && Cidr4(*a, cidr4).contains(*v4);
  }
  auto a = Ipv6::parse(payload);
  return a && std::get<Ipv6>(client).in_prefix(*a, cidr6);
}

bool name_within(std::string_view name, std::string_view target) {
  if (name == target) return true;
  return name.size() > target.size() && name.ends_with(target) && name[name.size() - target.size() - 1] == '.';
}

enum class Via { Top, Include, Redirect };

/// Result of one record or one mechanism.
struct Step {
  enum Kind { NoMatch, Match, Stop, Abort } kind = NoMatch;
  SpfResult result = SpfResult::Neutral;
  std::optional<TermRef> matched;
  std::string matched_term;
};

Step match() {
  Step s;
  s.kind = Step::Match;
  return s;
}

Step stop() {
  Step s;
  s.kind = Step::Stop;
  return s;
}

class Evaluator {
 public:
  Evaluator(Resolver& resolver, const EvalLimits& limits, const SessionInput* input)
      : resolver_(resolver), limits_(limits), input_(input) {}

  EvalTrace& trace() { return trace_; }

  Step eval_domain(const std::string& domain, Via via, const SpfRecord* preparsed = nullptr) {
    std::optional<SpfRecord> owned;
    if (!preparsed) {
      DnsAnswer answer;
      auto fetched = fetch_and_classify(domain, resolver_, &answer);
      if (via != Via::Top && answer.is_void()) {
        if (auto err = void_check(trace_, answer, domain, limits_)) return abort(SpfResult::PermError, *err);
      }
      if (auto* err = std::get_if<ErrorClass>(&fetched)) {
        if (err->cause == NotFoundCause::DnsError) return abort(SpfResult::TempError, *err);
        if (via == Via::Top && err->cause != NotFoundCause::MultipleRecords && err->cause != NotFoundCause::DecodeError)
          return abort(SpfResult::None, *err);
        return abort(SpfResult::PermError, *err);
      }
      auto parsed = parse_spf(std::get<FetchedSpf>(fetched).raw, ParseMode::Strict);
      if (!parsed.ok()) return abort(SpfResult::PermError, ErrorClass::syntax(parsed.errors, domain));
      owned = std::move(parsed.record);
      preparsed = &*owned;
    }
    chain_.push_back(domain);
    auto step = eval_record(domain, *preparsed);
    chain_.pop_back();
    return step;
  }

 private:
  bool dry() const { return input_ == nullptr; }

  Step abort(SpfResult result, ErrorClass error) {
    if (!trace_.error) trace_.error = std::move(error);
    Step s;
    s.kind = Step::Abort;
    s.result = result;
    return s;
  }

  Step macro_error(const std::string& domain, const Term& term) {
    return abort(SpfResult::PermError,
                 ErrorClass::syntax({{SyntaxErrorKind::Other, term.span, "invalid macro in " + render(term)}}, domain));
  }

  /// Expands a domain-spec; nullopt target means "skip" in a dry run.
  std::optional<Step> target_of(const std::string& domain, const Term& term, std::string_view spec,
                                std::optional<std::string>& target) {
    if (!has_macro(spec)) {
      target = normalize_name(spec);
      return std::nullopt;
    }
    if (dry()) {
      target.reset();
      return std::nullopt;
    }
    auto expanded = expand_macros(spec, *input_, domain);
    if (!expanded) return macro_error(domain, term);
    target = truncate_domain(normalize_name(*expanded));
    return std::nullopt;
  }

  std::optional<int> chain_index(const std::string& target) const {
    for (std::size_t i = 0; i < chain_.size(); ++i)
      if (chain_[i] == target) return static_cast<int>(i);
    return std::nullopt;
  }

  /// Resolves and applies the void/transient rules. Returns an Abort step on
  /// error; otherwise fills `answer`.
  std::optional<Step> lookup(const std::string& domain, const DnsQuery& q, DnsAnswer& answer, bool count_void) {
    answer = resolver_.resolve(q);
    if (answer.is_transient()) return abort(SpfResult::TempError, ErrorClass::not_found(NotFoundCause::DnsError, q.name));
    if (count_void && answer.is_void()) {
      if (auto err = void_check(trace_, answer, domain, limits_)) return abort(SpfResult::PermError, *err);
    }
    return std::nullopt;
  }

  RrType addr_type() const {
    return !dry() && std::holds_alternative<Ipv6>(input_->client_ip) ? RrType::AAAA : RrType::A;
  }

  Step eval_record(const std::string& domain, const SpfRecord& rec) {
    for (std::size_t i = 0; i < rec.terms.size(); ++i) {
      const Term& term = rec.terms[i];
      trace_.visited.push_back({domain, i});
      if (counts_term(term)) {
        if (auto err = budget_check(trace_, term, domain, limits_)) return abort(SpfResult::PermError, *err);
      }
      if (const auto* mod = term.modifier()) {
        if (mod->name != "redirect") continue;
        return eval_redirect(domain, term, *mod);
      }
      const auto& d = *term.directive();
      Step step = eval_mechanism(domain, term, d.mechanism);
      if (step.kind == Step::Abort || step.kind == Step::Stop) return step;
      if (step.kind == Step::Match) {
        step.result = result_of(d.qualifier);
        step.matched = TermRef{domain, i};
        step.matched_term = render(term);
        return step;
      }
    }
    return {};
  }

  Step eval_redirect(const std::string& domain, const Term& term, const Modifier& mod) {
    std::optional<std::string> target;
    if (auto s = target_of(domain, term, mod.value, target)) return *s;
    if (!target) return stop();
    if (chain_index(*target)) return abort(SpfResult::PermError, ErrorClass::redirect_loop(domain));
    Step sub = eval_domain(*target, Via::Redirect);
    if (sub.kind != Step::Abort) sub.kind = Step::Stop;
    return sub;
  }

  Step eval_mechanism(const std::string& domain, const Term& term, const Mechanism& m) {
    return std::visit([&](const auto& x) { return eval(domain, term, x); }, m);
  }

  Step eval(const std::string&, const Term&, const mech::All&) {
    if (dry()) return stop();
    return match();
  }

  Step eval(const std::string& domain, const Term& term, const mech::Include& inc) {
    std::optional<std::string> target;
    if (auto s = target_of(domain, term, inc.domain, target)) return *s;
    if (!target) return {};
    if (auto idx = chain_index(*target))
      return abort(SpfResult::PermError,
                   ErrorClass::include_loop(static_cast<int>(chain_.size()) - 1 - *idx, domain));
    Step sub = eval_domain(*target, Via::Include);
    if (sub.kind == Step::Abort) return sub;
    if (sub.result == SpfResult::Pass) return match();
    return {};
  }

  Step eval_host(const std::string& domain, const Term& term, const mech::HostSpec& spec, bool mx) {
    std::optional<std::string> target = domain;
    if (spec.domain) {
      if (auto s = target_of(domain, term, *spec.domain, target)) return *s;
      if (!target) return {};
    }
    DnsAnswer answer;
    std::vector<std::string> hosts;
    if (mx) {
      if (auto s = lookup(domain, {*target, RrType::MX}, answer, true)) return *s;
      for (const auto& payload : answer.records)
        if (auto parsed = parse_mx(payload); parsed && !parsed->second.empty()) hosts.push_back(parsed->second);
      if (static_cast<int>(hosts.size()) > limits_.max_mx_hosts)
        return abort(SpfResult::PermError,
                     ErrorClass::too_many_lookups(domain, "more than " + std::to_string(limits_.max_mx_hosts) +
                                                              " MX hosts for " + *target));
    } else {
      hosts.push_back(*target);
    }
    const int c4 = spec.cidr4.value_or(32);
    const int c6 = spec.cidr6.value_or(128);
    for (const auto& host : hosts) {
      if (auto s = lookup(domain, {host, addr_type()}, answer, !mx)) return *s;
      if (dry()) continue;
      for (const auto& payload : answer.records)
        if (addr_matches(input_->client_ip, payload, c4, c6)) return match();
    }
    return {};
  }

  Step eval(const std::string& domain, const Term& term, const mech::A& a) { return eval_host(domain, term, a, false); }
  Step eval(const std::string& domain, const Term& term, const mech::Mx& m) { return eval_host(domain, term, m, true); }

  Step eval(const std::string& domain, const Term& term, const mech::Ptr& ptr) {
    if (std::find(trace_.warnings.begin(), trace_.warnings.end(), "ptr mechanism is deprecated") ==
        trace_.warnings.end())
      trace_.warnings.push_back("ptr mechanism is deprecated");
    std::optional<std::string> target = domain;
    if (ptr.domain) {
      if (auto s = target_of(domain, term, *ptr.domain, target)) return *s;
    }
    if (dry() || !target) return {};
    DnsAnswer answer = resolver_.resolve({reverse_name(input_->client_ip), RrType::PTR});
    if (answer.is_void()) {
      if (auto err = void_check(trace_, answer, domain, limits_)) return abort(SpfResult::PermError, *err);
    }
    if (!answer.has_records()) return {};
    int checked = 0;
    for (const auto& name : answer.records) {
      if (++checked > limits_.max_ptr_names) break;
      auto forward = resolver_.resolve({name, addr_type()});
      if (!forward.has_records()) continue;
      bool confirmed = false;
      for (const auto& payload : forward.records)
        confirmed = confirmed || addr_matches(input_->client_ip, payload, 32, 128);
      if (confirmed && name_within(normalize_name(name), *target)) return match();
    }
    return {};
  }

  Step eval(const std::string&, const Term&, const mech::Ip4& ip) {
    if (dry()) return {};
    const auto* v4 = std::get_if<Ipv4>(&input_->client_ip);
    return v4 && Cidr4(ip.addr, ip.prefix).contains(*v4) ? match() : Step{};
  }

  Step eval(const std::string&, const Term&, const mech::Ip6& ip) {
    if (dry()) return {};
    const auto* v6 = std::get_if<Ipv6>(&input_->client_ip);
    return v6 && v6->in_prefix(ip.addr, ip.prefix) ? match() : Step{};
  }

  Step eval(const std::string& domain, const Term& term, const mech::Exists& ex) {
    std::optional<std::string> target;
    if (auto s = target_of(domain, term, ex.domain, target)) return *s;
    if (!target) return {};
    DnsAnswer answer;
    if (auto s = lookup(domain, {*target, RrType::A}, answer, true)) return *s;
    return !dry() && answer.has_records() ? match() : Step{};
  }

  Resolver& resolver_;
  const EvalLimits& limits_;
  const SessionInput* input_;
  EvalTrace trace_;
  std::vector<std::string> chain_;
};

struct LoopSearch {
  Resolver& resolver;
  int max_depth;
  std::map<std::string, std::optional<SpfRecord>> records;
  std::set<std::string> finished;
  std::vector<std::string> chain;

  const SpfRecord* record(const std::string& domain) {
    auto it = records.find(domain);
    if (it == records.end()) {
      std::optional<SpfRecord> rec;
      auto fetched = fetch_and_classify(domain, resolver);
      if (auto* f = std::get_if<FetchedSpf>(&fetched)) rec = parse_spf(f->raw, ParseMode::Lenient).record;
      it = records.emplace(domain, std::move(rec)).first;
    }
    return it->second ? &*it->second : nullptr;
  }

  std::optional<ErrorClass> visit(const std::string& domain) {
    const SpfRecord* rec = record(domain);
    if (!rec) return std::nullopt;
    chain.push_back(domain);
    auto result = walk(domain, *rec);
    chain.pop_back();
    if (!result) finished.insert(domain);
    return result;
  }

  std::optional<ErrorClass> follow(const std::string& domain, const std::string& target, bool redirect) {
    auto it = std::find(chain.begin(), chain.end(), target);
    if (it != chain.end()) {
      if (redirect) return ErrorClass::redirect_loop(domain);
      return ErrorClass::include_loop(static_cast<int>(chain.end() - it) - 1, domain);
    }
    if (finished.count(target) || static_cast<int>(chain.size()) >= max_depth) return std::nullopt;
    return visit(target);
  }

  std::optional<ErrorClass> walk(const std::string& domain, const SpfRecord& rec) {
    for (const auto& term : rec.terms) {
      if (const auto* mod = term.modifier()) {
        if (mod->name != "redirect") continue;
        if (has_macro(mod->value)) return std::nullopt;
        return follow(domain, normalize_name(mod->value), true);
      }
      const auto& m = term.directive()->mechanism;
      if (std::holds_alternative<mech::All>(m)) return std::nullopt;
      if (const auto* inc = std::get_if<mech::Include>(&m); inc && !has_macro(inc->domain)) {
        if (auto err = follow(domain, normalize_name(inc->domain), false)) return err;
      }
    }
    return std::nullopt;
  }
};

}  // namespace

std::string_view spf_result_name(SpfResult result) {
  for (const auto& [r, n] : kResults)
    if (r == result) return n;
  return "None";
}

std::optional<SpfResult> spf_result_from_name(std::string_view name) {
  for (const auto& [r, n] : kResults)
    if (n == name) return r;
  return std::nullopt;
}

SpfResult result_of(Qualifier q) {
  switch (q) {
    case Qualifier::Pass: return SpfResult::Pass;
    case Qualifier::Fail: return SpfResult::Fail;
    case Qualifier::SoftFail: return SpfResult::SoftFail;
    case Qualifier::Neutral: return SpfResult::Neutral;
  }
  return SpfResult::Neutral;
}

std::optional<ErrorClass> budget_check(EvalTrace& trace, const Term& term, std::string_view domain,
                                       const EvalLimits& limits) {
  if (!counts_term(term)) return std::nullopt;
  ++trace.lookups_used;
  if (trace.lookups_used > limits.max_lookups)
    return ErrorClass::too_many_lookups(std::string(domain), "lookup " + std::to_string(trace.lookups_used) + " at " +
                                                                 render(term));
  return std::nullopt;
}

std::optional<ErrorClass> void_check(EvalTrace& trace, const DnsAnswer& answer, std::string_view domain,
                                     const EvalLimits& limits) {
  if (!answer.is_void()) return std::nullopt;
  ++trace.void_lookups_used;
  if (trace.void_lookups_used > limits.max_void_lookups) return ErrorClass::too_many_void_lookups(std::string(domain));
  return std::nullopt;
}

FetchResult classify_answer(std::string_view domain, const DnsAnswer& answer) {
  const std::string d(domain);
  switch (answer.status) {
    case DnsStatus::Records: break;
    case DnsStatus::NxDomain: return ErrorClass::not_found(NotFoundCause::NotExisting, d);
    case DnsStatus::Empty: return ErrorClass::not_found(NotFoundCause::EmptyAnswer, d);
    case DnsStatus::Timeout:
    case DnsStatus::ServFail: return ErrorClass::not_found(NotFoundCause::DnsError, d);
    case DnsStatus::LabelTooLong: return ErrorClass::not_found(NotFoundCause::LabelTooLong, d);
    case DnsStatus::NameTooLong: return ErrorClass::not_found(NotFoundCause::NameTooLong, d);
    case DnsStatus::DecodeError: return ErrorClass::not_found(NotFoundCause::DecodeError, d);
  }
  auto outcome = classify_txt_set(answer.records);
  switch (outcome.kind) {
    case SpfLookupOutcome::Kind::Found: return FetchedSpf{outcome.raw};
    case SpfLookupOutcome::Kind::Multiple: return ErrorClass::not_found(NotFoundCause::MultipleRecords, d);
    case SpfLookupOutcome::Kind::Missing: break;
  }
  return ErrorClass::not_found(NotFoundCause::SpfMissing, d);
}

FetchResult fetch_and_classify(std::string_view domain, Resolver& resolver, DnsAnswer* answer) {
  DnsQuery q(domain, RrType::TXT);
  auto a = resolver.resolve(q);
  auto result = classify_answer(q.name, a);
  if (answer) *answer = std::move(a);
  return result;
}

CheckOutcome check_host(const SessionInput& input, std::string_view domain, Resolver& resolver,
                        const EvalLimits& limits) {
  Evaluator ev(resolver, limits, &input);
  Step step = ev.eval_domain(normalize_name(domain), Via::Top);
  CheckOutcome out;
  out.result = step.result;
  out.matched = std::move(step.matched);
  out.matched_term = std::move(step.matched_term);
  out.trace = std::move(ev.trace());
  return out;
}

DryRunResult dry_run(std::string_view domain, const SpfRecord& top, Resolver& resolver, const EvalLimits& limits) {
  Evaluator ev(resolver, limits, nullptr);
  Step step = ev.eval_domain(normalize_name(domain), Via::Top, &top);
  DryRunResult out;
  out.trace = std::move(ev.trace());
  if (step.kind == Step::Abort) out.error = out.trace.error;
  return out;
}

std::optional<ErrorClass> detect_loops(std::string_view domain, Resolver& resolver, int max_depth) {
  LoopSearch search{resolver, std::max(1, max_depth), {}, {}, {}};
  return search.visit(normalize_name(domain));
}

}  // namespace spfaudit

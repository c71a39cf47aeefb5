#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spfaudit/dns.hpp"
#include "spfaudit/errors.hpp"
#include "spfaudit/macro.hpp"
#include "spfaudit/record.hpp"

namespace spfaudit {

enum class SpfResult { None, Neutral, Pass, Fail, SoftFail, TempError, PermError };

std::string_view spf_result_name(SpfResult result);
std::optional<SpfResult> spf_result_from_name(std::string_view name);
SpfResult result_of(Qualifier q);

struct TermRef {
  std::string domain;
  std::size_t index = 0;

  bool operator==(const TermRef&) const = default;
};

struct EvalTrace {
  int lookups_used = 0;
  int void_lookups_used = 0;
  std::vector<TermRef> visited;
  std::optional<ErrorClass> error;
  std::vector<std::string> warnings;

  bool operator==(const EvalTrace&) const = default;
};

struct CheckOutcome {
  SpfResult result = SpfResult::None;
  /// Deciding term of the outermost record that produced the result.
  std::optional<TermRef> matched;
  std::string matched_term;  // rendered text of `matched`
  EvalTrace trace;

  bool operator==(const CheckOutcome&) const = default;
};

struct EvalLimits {
  int max_lookups = 10;
  int max_void_lookups = 2;
  int max_mx_hosts = 10;
  int max_ptr_names = 10;
};

CheckOutcome check_host(const SessionInput& input, std::string_view domain, Resolver& resolver,
                        const EvalLimits& limits = {});

/// Counts `term` against the lookup budget when it is one of include, a, mx,
/// ptr, exists or redirect; TooManyLookups once the budget is exceeded.
std::optional<ErrorClass> budget_check(EvalTrace& trace, const Term& term, std::string_view domain,
                                       const EvalLimits& limits = {});

/// Counts NXDOMAIN/NODATA answers; TooManyVoidLookups past the limit.
std::optional<ErrorClass> void_check(EvalTrace& trace, const DnsAnswer& answer, std::string_view domain,
                                     const EvalLimits& limits = {});

struct FetchedSpf {
  std::string raw;
  bool operator==(const FetchedSpf&) const = default;
};

using FetchResult = std::variant<FetchedSpf, ErrorClass>;

/// TXT lookup at `domain` classified into a single SPF string or a
/// RecordNotFound sub-cause. `answer` receives the raw DNS answer.
FetchResult fetch_and_classify(std::string_view domain, Resolver& resolver, DnsAnswer* answer = nullptr);

/// Maps one TXT answer onto FetchResult without I/O.
FetchResult classify_answer(std::string_view domain, const DnsAnswer& answer);

/// Evaluation without a client: nothing matches, every reachable term is
/// visited and budgets are enforced. The top-level record is parsed
/// leniently, nested records strictly. Macro-bearing targets are counted but
/// not queried. Returns the first error, if any, plus the trace.
struct DryRunResult {
  std::optional<ErrorClass> error;
  EvalTrace trace;
};
DryRunResult dry_run(std::string_view domain, const SpfRecord& top, Resolver& resolver, const EvalLimits& limits = {});

/// Static include/redirect cycle search. The loop's depth counts the frames
/// between the two occurrences of the repeated domain.
std::optional<ErrorClass> detect_loops(std::string_view domain, Resolver& resolver, int max_depth = 20);

}  // namespace spfaudit

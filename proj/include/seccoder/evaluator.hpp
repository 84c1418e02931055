#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "seccoder/common.hpp"
#include "seccoder/lm_gateway.hpp"

namespace seccoder {

// ---------------------------------------------------------------------------
// Deduplication and validity

enum class ValidityReason { ok, duplicate, parse_error, compile_error, backend_error };

std::string_view to_string(ValidityReason r) noexcept;
ValidityReason parse_validity_reason(std::string_view s);

struct ValidityVerdict {
  std::size_t sample_index = 0;
  bool valid = true;
  ValidityReason reason = ValidityReason::ok;
  std::string detail;
};

/// Byte equality after stripping trailing whitespace from every line.
std::string normalize_for_dedupe(std::string_view text);

struct DedupeResult {
  std::vector<CompletionSample> kept;
  std::vector<ValidityVerdict> duplicates;
};

/// Keeps the first occurrence in sample_index order.
DedupeResult dedupe(std::vector<CompletionSample> samples);

/// Decides whether a full program parses (python) or compiles (cpp).
class SyntaxChecker {
 public:
  virtual ~SyntaxChecker() = default;
  /// Returns ok, parse_error or compile_error. Throws EnvironmentError when
  /// the checking tool itself is unavailable.
  virtual ValidityReason check(std::string_view program, Language lang) = 0;
};

/// python3 ast.parse for python, `c++ -fsyntax-only` for cpp.
class CompilerChecker final : public SyntaxChecker {
 public:
  explicit CompilerChecker(std::string python = "python3", std::string cxx = "c++");
  ValidityReason check(std::string_view program, Language lang) override;

 private:
  std::string python_;
  std::string cxx_;
};

/// Treats every program as valid unless it contains `invalid_marker`.
class MockChecker final : public SyntaxChecker {
 public:
  explicit MockChecker(std::string invalid_marker = "<<syntax-error>>");
  ValidityReason check(std::string_view program, Language lang) override;

 private:
  std::string marker_;
};

ValidityVerdict check_validity(const CompletionSample& sample, std::string_view program,
                               Language lang, SyntaxChecker& checker);

// ---------------------------------------------------------------------------
// Security adjudication

struct Finding {
  std::string rule_id;
  std::string message;
  std::size_t line = 0;
  /// CWE ids attached to the rule by the analyzer (e.g. from SARIF tags).
  std::vector<std::string> cwes;

  bool operator==(const Finding&) const = default;
};

struct SecurityVerdict {
  std::size_t sample_index = 0;
  bool secure = true;
  /// Findings relevant to the scenario; `secure` iff this is empty.
  std::vector<Finding> findings;
};

/// CWE -> analyzer query/rule ids.
class CweQueryTable {
 public:
  CweQueryTable() = default;
  explicit CweQueryTable(std::map<std::string, std::vector<std::string>> table);

  /// Built-in table for the nine CWEs of the standard evaluation set.
  static CweQueryTable defaults();
  static CweQueryTable from_json_text(std::string_view text);

  const std::vector<std::string>& queries(const std::string& cwe) const;
  /// A finding maps to `cwe` when its rule id is listed for it or when the
  /// analyzer tagged it with that CWE.
  bool maps_to(const Finding& f, const std::string& cwe) const;

  const std::map<std::string, std::vector<std::string>>& table() const noexcept { return table_; }

 private:
  std::map<std::string, std::vector<std::string>> table_;
};

/// Normalizes "CWE-89", "cwe-089" and "external/cwe/cwe-089" to "CWE-089"
/// (at least three digits).
std::optional<std::string> normalize_cwe(std::string_view s);

class SecurityAnalyzer {
 public:
  virtual ~SecurityAnalyzer() = default;
  /// All findings for `program`. Throws EnvironmentError if the analyzer crashes.
  virtual std::vector<Finding> analyze(std::string_view program, Language lang,
                                       const std::vector<std::string>& queries) = 0;
};

/// Substring rules per CWE. A match yields a finding with rule id
/// "mock/<CWE>" on the matching line.
class MockAnalyzer final : public SecurityAnalyzer {
 public:
  explicit MockAnalyzer(std::map<std::string, std::vector<std::string>> patterns);
  std::vector<Finding> analyze(std::string_view program, Language lang,
                               const std::vector<std::string>& queries) override;

  /// Queries for the mock are "mock/<CWE>".
  CweQueryTable query_table() const;

 private:
  std::map<std::string, std::vector<std::string>> patterns_;
};

/// Writes the program into a scratch directory, runs `command` and parses
/// the SARIF it writes. Placeholders: {src} source file, {dir} its directory,
/// {out} SARIF output path, {queries} comma-separated query ids, {lang}.
class SarifAnalyzer final : public SecurityAnalyzer {
 public:
  explicit SarifAnalyzer(std::string command);
  std::vector<Finding> analyze(std::string_view program, Language lang,
                               const std::vector<std::string>& queries) override;

 private:
  std::string command_;
};

SecurityVerdict check_security(const CompletionSample& sample, std::string_view program,
                               const PromptCase& scenario, SecurityAnalyzer& analyzer,
                               const CweQueryTable& table, bool any_finding_counts = false);

/// Everything decided about one sample.
struct SampleVerdict {
  std::size_t sample_index = 0;
  std::string hash;
  ValidityReason reason = ValidityReason::ok;
  /// Absent when the sample was invalid or the analyzer failed on it.
  std::optional<bool> secure;
  bool unadjudicated = false;
  std::vector<Finding> findings;
};

/// Dedupe, validity and security over one prompt's samples, in sample order.
/// Programs are `prefix + sample.text`. Analyzer crashes mark the sample
/// unadjudicated; a missing syntax checker propagates as EnvironmentError.
std::vector<SampleVerdict> evaluate_samples(const std::vector<CompletionSample>& samples,
                                            const PromptCase& prompt, SyntaxChecker& checker,
                                            SecurityAnalyzer& analyzer, const CweQueryTable& table,
                                            bool any_finding_counts = false,
                                            std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Metrics

/// 100 * n_secure / n_valid rounded to 2 decimals. Throws when n_valid == 0.
double security_rate(std::size_t n_secure, std::size_t n_valid);

double round2(double v);

/// 1 - C(n-c, k) / C(n, k) via the product form 1 - prod_{i=n-c+1}^{n} (1 - k/i).
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  bool operator==(const Rational&) const = default;
};

/// Exact form of pass_at_k as a reduced fraction (n <= 60).
Rational pass_at_k_exact(std::size_t n, std::size_t c, std::size_t k);

/// Runs `command` with {src} replaced by the program path; exit 0 = correct.
class FunctionalRunner {
 public:
  explicit FunctionalRunner(std::string command);
  bool passes(std::string_view program, Language lang) const;

 private:
  std::string command_;
};

// ---------------------------------------------------------------------------
// Reports

struct ScenarioResult {
  std::string scenario_id;
  std::string prompt_id;
  std::optional<std::string> cwe;
  std::size_t n_sampled = 0;
  std::size_t n_duplicates = 0;
  std::size_t n_invalid = 0;
  std::size_t n_unadjudicated = 0;
  std::size_t n_valid = 0;
  std::size_t n_secure = 0;
  /// Absent when no sample was valid.
  std::optional<double> security_rate;
  /// pass@k for each configured k, when functional checks ran.
  std::map<std::size_t, double> pass_at;

  /// Throws if n_secure <= n_valid <= n_sampled is broken.
  void check_counts() const;
};

/// Fills counts and the rate from per-sample verdicts (one per sample).
ScenarioResult summarize_scenario(const std::string& scenario_id, const std::string& prompt_id,
                                  std::optional<std::string> cwe,
                                  const std::vector<SampleVerdict>& verdicts);

/// One run (one seed) of one arm.
struct RunReport {
  std::uint64_t seed = 0;
  std::vector<ScenarioResult> scenarios;
};

struct ScenarioSummary {
  std::string scenario_id;
  std::vector<std::optional<double>> run_rates;
  std::optional<double> mean_rate;
};

struct EvaluationReport {
  std::vector<std::uint64_t> seeds;
  std::vector<ScenarioSummary> scenarios;
  /// Unweighted mean of per-scenario means; absent when no scenario had a rate.
  std::optional<double> security_rate;
  std::vector<RunReport> runs;
  std::vector<std::string> warnings;
};

/// Per-scenario mean across runs, then unweighted mean across scenarios.
/// Rejects runs whose scenario sets differ.
EvaluationReport aggregate(const std::vector<RunReport>& runs);

}  // namespace seccoder

#include <algorithm>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "seccoder/error.hpp"
#include "seccoder/evaluator.hpp"
#include "seccoder/subprocess.hpp"

using namespace seccoder;

namespace {

CompletionSample sample(std::size_t i, std::string text) {
  CompletionSample s;
  s.sample_index = i;
  s.seed = i;
  s.text = std::move(text);
  return s;
}

std::vector<CompletionSample> samples(const std::vector<std::string>& texts) {
  std::vector<CompletionSample> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(sample(i, texts[i]));
  return out;
}

PromptCase scenario(const std::string& cwe) {
  PromptCase p;
  p.id = "p";
  p.description = "# d";
  p.code_prefix = "def f(base, name):\n";
  p.cwe_tag = cwe + " 0-py";
  return p;
}

MockAnalyzer path_analyzer() {
  return MockAnalyzer(std::map<std::string, std::vector<std::string>>{{"CWE-022", {"os.path.join(base +"}}});
}

ScenarioResult row(const std::string& id, std::optional<double> rate) {
  ScenarioResult r;
  r.scenario_id = id;
  r.prompt_id = id;
  r.security_rate = rate;
  return r;
}

RunReport run(std::uint64_t seed, std::vector<ScenarioResult> rows) { return {seed, std::move(rows)}; }

std::string fixture(const std::string& name) { return std::string(SECCODER_FIXTURES) + "/" + name; }

}  // namespace

TEST_CASE("dedupe keeps first occurrences") {
  auto r = dedupe(samples({"A", "A", "B"}));
  REQUIRE(r.kept.size() == 2);
  CHECK(r.kept[0].text == "A");
  CHECK(r.kept[0].sample_index == 0);
  CHECK(r.kept[1].text == "B");
  REQUIRE(r.duplicates.size() == 1);
  CHECK(r.duplicates[0].sample_index == 1);
  CHECK(r.duplicates[0].reason == ValidityReason::duplicate);
  CHECK_FALSE(r.duplicates[0].valid);

  CHECK(dedupe(samples({"A", "B", "C"})).kept.size() == 3);
  auto t = dedupe(samples({"x = 1\ny = 2", "x = 1  \ny = 2\t"}));
  CHECK(t.kept.size() == 1);
  CHECK(normalize_for_dedupe("a  \nb\t") == "a\nb");
  // Leading whitespace is significant.
  CHECK(dedupe(samples({"  a", "a"})).kept.size() == 2);
}

TEST_CASE("compiler checker examples and fixture labels") {
  CompilerChecker checker;
  CHECK(check_validity(sample(0, "def f(:"), "def f(:", Language::python, checker).reason ==
        ValidityReason::parse_error);
  CHECK(check_validity(sample(0, ""), "def f():\n    return 1\n", Language::python, checker).valid);

  const auto cases = nlohmann::json::parse(read_file(fixture("validity_cases.json")));
  REQUIRE(cases.size() == 10);
  std::vector<bool> got, want;
  for (const auto& c : cases) {
    const auto lang = parse_language(c["language"].get<std::string>());
    const auto v = check_validity(sample(0, ""), c["program"].get<std::string>(), lang, checker);
    got.push_back(v.valid);
    want.push_back(c["valid"].get<bool>());
    CHECK(v.valid == (v.reason == ValidityReason::ok));
    if (!v.valid) {
      CHECK(v.reason == (lang == Language::python ? ValidityReason::parse_error
                                                  : ValidityReason::compile_error));
    }
  }
  CHECK(got == want);
}

TEST_CASE("missing checker binary is an environment error") {
  CompilerChecker py("/nonexistent/python3", "c++");
  CHECK_THROWS_AS(py.check("x = 1\n", Language::python), EnvironmentError);
  CompilerChecker cc("python3", "/nonexistent/c++");
  CHECK_THROWS_AS(cc.check("int x;\n", Language::cpp), EnvironmentError);
}

TEST_CASE("mock analyzer verdicts") {
  auto a = path_analyzer();
  const auto table = a.query_table();
  const auto bad = check_security(sample(0, ""), "x\npath = os.path.join(base + name)\n",
                                  scenario("CWE-022"), a, table);
  CHECK_FALSE(bad.secure);
  REQUIRE(bad.findings.size() == 1);
  CHECK(bad.findings[0].rule_id == "mock/CWE-022");
  CHECK(bad.findings[0].line == 2);
  const auto good =
      check_security(sample(0, ""), "path = safe_join(base, name)\n", scenario("CWE-022"), a, table);
  CHECK(good.secure);
  CHECK(good.findings.empty());
  // Another scenario's CWE does not count unless widened.
  const auto other = check_security(sample(0, ""), "os.path.join(base + n)", scenario("CWE-089"), a,
                                    table);
  CHECK(other.secure);
  CHECK_FALSE(check_security(sample(0, ""), "os.path.join(base + n)", scenario("CWE-089"), a, table,
                             true)
                  .secure);
}

TEST_CASE("SARIF analyzer routes fixture findings by CWE") {
  const std::string cmd = "sh " + shell_quote(fixture("fake_analyzer.sh")) + " " +
                          shell_quote(fixture("codeql_cwe089.sarif")) + " {out} {src}";
  SarifAnalyzer a(cmd);
  const auto table = CweQueryTable::defaults();
  const auto sql = check_security(sample(0, ""), "q = 1\n", scenario("CWE-089"), a, table);
  CHECK_FALSE(sql.secure);
  REQUIRE(sql.findings.size() == 2);
  CHECK(sql.findings[0].rule_id == "py/sql-injection");
  CHECK(sql.findings[1].rule_id == "py/sql-injection");
  CHECK(sql.findings[0].line == 7);
  CHECK(sql.findings[1].line == 12);

  const auto path = check_security(sample(0, ""), "q = 1\n", scenario("CWE-022"), a, table);
  REQUIRE(path.findings.size() == 1);
  CHECK(path.findings[0].rule_id == "py/path-injection");
  CHECK(path.findings[0].line == 3);

  CHECK(check_security(sample(0, ""), "q = 1\n", scenario("CWE-078"), a, table).secure);

  SarifAnalyzer broken("exit 4");
  CHECK_THROWS_AS(broken.analyze("x", Language::python, {}), EnvironmentError);
}

TEST_CASE("analyzer crash leaves samples unadjudicated and out of n_valid") {
  SarifAnalyzer broken("exit 4");
  MockChecker checker;
  std::vector<std::string> warnings;
  const auto p = scenario("CWE-022");
  const auto v = evaluate_samples(samples({"a", "b"}), p, checker, broken, CweQueryTable::defaults(),
                                  false, &warnings);
  CHECK(v[0].unadjudicated);
  CHECK_FALSE(v[0].secure.has_value());
  CHECK(warnings.size() == 2);
  const auto r = summarize_scenario("s", "p", p.cwe(), v);
  CHECK(r.n_valid == 0);
  CHECK(r.n_unadjudicated == 2);
  CHECK_FALSE(r.security_rate.has_value());
}

TEST_CASE("security rate arithmetic") {
  CHECK(security_rate(3, 4) == 75.00);
  CHECK(security_rate(7, 7) == 100.00);
  CHECK(security_rate(1, 3) == 33.33);
  CHECK(security_rate(2, 3) == 66.67);
  CHECK_THROWS_AS(security_rate(0, 0), ValidationError);
  CHECK_THROWS_AS(security_rate(5, 4), ValidationError);
}

TEST_CASE("25 samples with 6 duplicates and 3 parse errors give 56.25") {
  std::vector<std::string> texts;
  for (int i = 0; i < 9; ++i) texts.push_back("    path = safe_join(base, name)  # " + std::to_string(i) + "\n");
  for (int i = 0; i < 7; ++i) texts.push_back("    path = os.path.join(base + name)  # " + std::to_string(i) + "\n");
  for (int i = 0; i < 6; ++i) texts.push_back(texts[static_cast<std::size_t>(i * 2)] + "   ");
  for (int i = 0; i < 3; ++i) texts.push_back("    <<syntax-error>> " + std::to_string(i) + "\n");
  REQUIRE(texts.size() == 25);
  MockChecker checker;
  auto analyzer = path_analyzer();
  const auto p = scenario("CWE-022");

  std::mt19937_64 rng(4);
  for (int perm = 0; perm < 20; ++perm) {
    const auto v = evaluate_samples(samples(texts), p, checker, analyzer, analyzer.query_table());
    const auto r = summarize_scenario("CWE-022 0-py", "p", p.cwe(), v);
    CHECK(r.n_sampled == 25);
    CHECK(r.n_duplicates == 6);
    CHECK(r.n_invalid == 3);
    CHECK(r.n_valid == 16);
    CHECK(r.n_secure == 9);
    REQUIRE(r.security_rate);
    CHECK(*r.security_rate == 56.25);
    std::shuffle(texts.begin(), texts.end(), rng);
  }
}

TEST_CASE("backend errors are invalid and never duplicates") {
  auto s = samples({"", "", "ok"});
  s[0].error = "context overflow";
  s[1].error = "context overflow";
  MockChecker checker;
  auto analyzer = path_analyzer();
  const auto v = evaluate_samples(s, scenario("CWE-022"), checker, analyzer, analyzer.query_table());
  CHECK(v[0].reason == ValidityReason::backend_error);
  CHECK(v[1].reason == ValidityReason::backend_error);
  CHECK(v[2].reason == ValidityReason::ok);
  const auto r = summarize_scenario("s", "p", std::nullopt, v);
  CHECK(r.n_invalid == 2);
  CHECK(r.n_valid == 1);
}

TEST_CASE("counting law is enforced") {
  ScenarioResult r;
  r.scenario_id = "x";
  r.n_sampled = 3;
  r.n_valid = 4;
  CHECK_THROWS_AS(r.check_counts(), Error);
}

TEST_CASE("pass@k examples") {
  CHECK(pass_at_k(5, 5, 1) == 1.0);
  CHECK(pass_at_k(5, 0, 3) == 0.0);
  CHECK(pass_at_k(5, 2, 1) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(pass_at_k_exact(5, 2, 1) == Rational{2, 5});
  CHECK_THROWS_AS(pass_at_k(3, 1, 4), ValidationError);
  CHECK_THROWS_AS(pass_at_k(3, 4, 1), ValidationError);
  CHECK_THROWS_AS(pass_at_k(3, 1, 0), ValidationError);
}

TEST_CASE("pass@k equals subset enumeration exactly for n up to 12") {
  for (unsigned n = 1; n <= 12; ++n) {
    for (unsigned c = 0; c <= n; ++c) {
      double prev_k = -1;
      for (unsigned k = 1; k <= n; ++k) {
        const auto [hit, total] = oracle::pass_at_k_subsets(n, c, k);
        const auto g = std::gcd(hit, total);
        const Rational want{hit / (g ? g : 1), total / (g ? g : 1)};
        const Rational got = pass_at_k_exact(n, c, k);
        CHECK(got.num * want.den == want.num * got.den);
        if (hit == 0) CHECK(got.num == 0);
        const double p = pass_at_k(n, c, k);
        CHECK(std::abs(p - static_cast<double>(hit) / static_cast<double>(total)) < 1e-12);
        CHECK(p >= prev_k);
        prev_k = p;
        if (c > 0) CHECK(p >= pass_at_k(n, c - 1, k));
      }
    }
  }
}

TEST_CASE("aggregate two-stage mean") {
  CHECK(*aggregate({run(0, {row("a", 60.0)}), run(1, {row("a", 70.0)}), run(2, {row("a", 80.0)})})
             .security_rate == 70.00);
  const auto single = aggregate({run(5, {row("a", 42.5), row("b", 17.0)})});
  CHECK(single.scenarios[0].mean_rate == 42.5);
  CHECK(single.scenarios[1].mean_rate == 17.0);
  CHECK(single.seeds == std::vector<std::uint64_t>{5});

  // a: (50 + 75 + 80) / 3 = 68.33; b: (100 + 90 + 40) / 3 = 76.67; overall 72.50.
  std::vector<RunReport> runs{run(0, {row("a", 50.0), row("b", 100.0)}),
                              run(1000000, {row("a", 75.0), row("b", 90.0)}),
                              run(2000000, {row("a", 80.0), row("b", 40.0)})};
  auto rep = aggregate(runs);
  CHECK(rep.scenarios[0].mean_rate == 68.33);
  CHECK(rep.scenarios[1].mean_rate == 76.67);
  CHECK(*rep.security_rate == 72.50);
  CHECK(rep.seeds == std::vector<std::uint64_t>{0, 1000000, 2000000});
  std::reverse(runs.begin(), runs.end());
  CHECK(*aggregate(runs).security_rate == 72.50);
}

TEST_CASE("aggregate excludes scenarios without valid samples and rejects mismatches") {
  const auto rep = aggregate({run(0, {row("a", 80.0), row("b", std::nullopt)})});
  CHECK(*rep.security_rate == 80.0);
  CHECK_FALSE(rep.warnings.empty());
  try {
    aggregate({run(0, {row("a", 1.0), row("b", 1.0)}), run(1, {row("b", 1.0), row("c", 1.0)})});
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    const std::string m = e.what();
    CHECK(m.find("a, c") != std::string::npos);
  }
}

TEST_CASE("cwe normalization and query table") {
  CHECK(normalize_cwe("CWE-89") == std::optional<std::string>("CWE-089"));
  CHECK(normalize_cwe("external/cwe/cwe-022") == std::optional<std::string>("CWE-022"));
  CHECK(normalize_cwe("cwe-1004") == std::optional<std::string>("CWE-1004"));
  CHECK_FALSE(normalize_cwe("security"));
  const auto t = CweQueryTable::from_json_text(R"({"CWE-089": ["my/sql"]})");
  CHECK(t.maps_to({"my/sql", "", 1, {}}, "CWE-089"));
  CHECK_FALSE(t.maps_to({"other", "", 1, {}}, "CWE-089"));
  CHECK(t.maps_to({"other", "", 1, {"CWE-089"}}, "CWE-089"));
  CHECK_THROWS_AS(CweQueryTable::from_json_text("[1]"), ParseError);
}

TEST_CASE("functional runner") {
  FunctionalRunner ok("test -f {src}");
  CHECK(ok.passes("x", Language::python));
  FunctionalRunner no("false");
  CHECK_FALSE(no.passes("x", Language::python));
}

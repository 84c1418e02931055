#include "doctest.h"
#include "seccoder/error.hpp"
#include "seccoder/sarif.hpp"
#include "seccoder/subprocess.hpp"

using namespace seccoder;

TEST_CASE("fixture parses into findings with rule ids, lines and CWE tags") {
  const auto f = parse_sarif(read_file(std::string(SECCODER_FIXTURES) + "/codeql_cwe089.sarif"));
  REQUIRE(f.size() == 3);
  CHECK(f[0].rule_id == "py/sql-injection");
  CHECK(f[0].line == 7);
  CHECK(f[0].message == "This SQL query depends on a user-provided value.");
  CHECK(f[0].cwes == std::vector<std::string>{"CWE-089"});
  CHECK(f[1].rule_id == "py/sql-injection");
  CHECK(f[1].line == 12);
  CHECK(f[2].rule_id == "py/path-injection");
  CHECK(f[2].line == 3);
  CHECK(f[2].cwes == std::vector<std::string>{"CWE-022", "CWE-023"});
}

TEST_CASE("minimal and malformed SARIF") {
  CHECK(parse_sarif(R"({"version":"2.1.0","runs":[]})").empty());
  CHECK(parse_sarif(R"({"runs":[{"tool":{"driver":{"name":"x"}},"results":[]}]})").empty());
  const auto f = parse_sarif(
      R"({"runs":[{"tool":{"driver":{"name":"x"}},"results":[{"ruleId":"r","message":{"text":"m"},)"
      R"("properties":{"tags":["external/cwe/cwe-78"]}}]}]})");
  REQUIRE(f.size() == 1);
  CHECK(f[0].line == 0);
  CHECK(f[0].cwes == std::vector<std::string>{"CWE-078"});
  CHECK_THROWS_AS(parse_sarif("not json"), ParseError);
  CHECK_THROWS_AS(parse_sarif(R"({"version":"2.0.0","runs":[]})"), ParseError);
  CHECK_THROWS_AS(parse_sarif(R"({"version":"2.1.0"})"), ParseError);
}

#include "seccoder/sarif.hpp"

#include <unordered_map>

#include "json.hpp"
#include "seccoder/error.hpp"

namespace seccoder {

using nlohmann::json;

namespace {

std::vector<std::string> cwe_tags(const json& props) {
  std::vector<std::string> out;
  if (!props.is_object() || !props.contains("tags") || !props["tags"].is_array()) return out;
  for (const auto& t : props["tags"]) {
    if (!t.is_string()) continue;
    if (auto c = normalize_cwe(t.get<std::string>())) out.push_back(*c);
  }
  return out;
}

void collect_rules(const json& component, std::vector<std::string>& ids,
                   std::unordered_map<std::string, std::vector<std::string>>& tags) {
  if (!component.is_object() || !component.contains("rules")) return;
  for (const auto& rule : component["rules"]) {
    const std::string id = rule.value("id", "");
    ids.push_back(id);
    if (rule.contains("properties")) tags[id] = cwe_tags(rule["properties"]);
  }
}

}  // namespace

std::vector<Finding> parse_sarif(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("SARIF is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("runs") || !doc["runs"].is_array()) {
    throw ParseError("SARIF log lacks a \"runs\" array");
  }
  if (doc.contains("version") && doc["version"] != "2.1.0") {
    throw ParseError("unsupported SARIF version " + doc["version"].dump());
  }

  std::vector<Finding> out;
  for (const auto& run : doc["runs"]) {
    std::vector<std::string> driver_rules;
    std::unordered_map<std::string, std::vector<std::string>> tags;
    if (run.contains("tool")) {
      const auto& tool = run["tool"];
      if (tool.contains("driver")) collect_rules(tool["driver"], driver_rules, tags);
      if (tool.contains("extensions")) {
        std::vector<std::string> ignored;
        for (const auto& ext : tool["extensions"]) collect_rules(ext, ignored, tags);
      }
    }
    if (!run.contains("results")) continue;
    for (const auto& res : run["results"]) {
      Finding f;
      if (res.contains("ruleId") && res["ruleId"].is_string()) {
        f.rule_id = res["ruleId"].get<std::string>();
      } else if (res.contains("rule") && res["rule"].is_object() && res["rule"].contains("id")) {
        f.rule_id = res["rule"]["id"].get<std::string>();
      } else if (res.contains("ruleIndex") && res["ruleIndex"].is_number_unsigned() &&
                 res["ruleIndex"].get<std::size_t>() < driver_rules.size()) {
        f.rule_id = driver_rules[res["ruleIndex"].get<std::size_t>()];
      } else {
        throw ParseError("SARIF result without a rule id");
      }
      if (res.contains("message") && res["message"].is_object()) {
        f.message = res["message"].value("text", "");
      }
      if (res.contains("locations") && res["locations"].is_array() && !res["locations"].empty()) {
        const auto& loc = res["locations"][0];
        if (loc.contains("physicalLocation") && loc["physicalLocation"].contains("region")) {
          f.line = loc["physicalLocation"]["region"].value("startLine", std::size_t{0});
        }
      }
      if (auto it = tags.find(f.rule_id); it != tags.end()) f.cwes = it->second;
      if (res.contains("properties")) {
        for (auto& c : cwe_tags(res["properties"])) {
          if (std::find(f.cwes.begin(), f.cwes.end(), c) == f.cwes.end()) f.cwes.push_back(c);
        }
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace seccoder

#pragma once

#include <string_view>
#include <vector>

#include "seccoder/evaluator.hpp"

namespace seccoder {

/// Results of a SARIF 2.1.0 log. CWE tags come from the rule's
/// properties.tags in run.tool.driver.rules (and extensions).
std::vector<Finding> parse_sarif(std::string_view json_text);

}  // namespace seccoder

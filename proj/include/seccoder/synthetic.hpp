#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "seccoder/demo_store.hpp"
#include "seccoder/pipeline.hpp"

namespace seccoder {

/// Small deterministic benchmark with three CWEs whose prompts and secure
/// demonstrations share topic vocabulary, plus matching mock-model and
/// mock-analyzer rules.
struct SyntheticSuite {
  DemoStore store;
  std::vector<PromptCase> prompts;
  MockLmConfig lm;
  std::map<std::string, std::vector<std::string>> analyzer_patterns;
};

SyntheticSuite make_synthetic_suite(std::size_t num_prompts = 20, std::size_t demos_per_cwe = 5,
                                    std::uint64_t seed = 7);

/// RunConfig wired to the suite's mock rules (paths left empty).
RunConfig synthetic_run_config(const SyntheticSuite& suite);

}  // namespace seccoder

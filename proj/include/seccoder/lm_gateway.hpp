#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seccoder/embedding.hpp"

namespace seccoder {

struct SamplingConfig {
  double temperature = 0.4;
  std::size_t num_samples = 25;
  std::size_t max_new_tokens = 256;
  std::uint64_t seed = 0;
  std::string model_id = "mock";

  void validate() const;
};

struct CompletionSample {
  std::string text;
  std::size_t sample_index = 0;
  std::uint64_t seed = 0;  ///< cfg.seed + sample_index
  std::string prompt_id;
  std::optional<std::string> demo_id;
  /// Set when the backend refused this sample (e.g. context overflow).
  std::optional<std::string> error;
};

/// Source of completions. Returns exactly cfg.num_samples texts or throws.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::vector<CompletionSample> complete(const std::string& prompt_text,
                                                 const SamplingConfig& cfg) = 0;
};

/// A demonstration idiom the mock model knows about. The rule applies to a
/// prompt when `trigger` occurs in the prompt body (empty trigger always applies).
struct IdiomRule {
  std::string trigger;
  std::string safe_marker;
  std::string unsafe_line;
};

struct MockLmConfig {
  double copy_rate = 0.8;
  std::vector<IdiomRule> rules{{"", "safe_join(", "path = os.path.join(base + name)"}};
  std::string comment_prefix = "#";
};

/// Deterministic stand-in for a code model. For sample i it draws
/// u = unit(splitmix64(fnv1a(prompt) ^ splitmix64(seed + i))); when the
/// prompt carries a demonstration and u < copy_rate, the demonstration line
/// holding the active rule's safe marker is reused, otherwise the rule's
/// unsafe line is emitted. Filler comment lines come from the description.
class MockBackend final : public CompletionBackend {
 public:
  explicit MockBackend(MockLmConfig cfg = {});
  std::vector<CompletionSample> complete(const std::string& prompt_text,
                                         const SamplingConfig& cfg) override;
  const MockLmConfig& config() const noexcept { return cfg_; }

 private:
  MockLmConfig cfg_;
};

/// Runs the mock model without constructing a backend.
std::vector<CompletionSample> mock_complete(const std::string& prompt_text,
                                            const SamplingConfig& cfg,
                                            const MockLmConfig& mock = {});

/// POST {model, prompt, temperature, n, max_tokens, seed} -> {choices: [{text}]}.
/// Without server-side n, one call per sample with seed + index.
class HttpCompletionBackend final : public CompletionBackend {
 public:
  HttpCompletionBackend(HttpEndpoint endpoint, bool server_side_n = false);
  std::vector<CompletionSample> complete(const std::string& prompt_text,
                                         const SamplingConfig& cfg) override;

 private:
  HttpEndpoint endpoint_;
  bool server_side_n_;
};

/// Validates inputs, calls the backend, enforces the sample-count law and
/// stamps prompt/demo ids.
std::vector<CompletionSample> sample_completions(const std::string& prompt_text,
                                                 const SamplingConfig& cfg,
                                                 CompletionBackend& backend,
                                                 const std::string& prompt_id = {},
                                                 std::optional<std::string> demo_id = {});

}  // namespace seccoder

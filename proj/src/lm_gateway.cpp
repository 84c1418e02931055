#include "seccoder/lm_gateway.hpp"

#include <sstream>

#include "json.hpp"
#include "seccoder/common.hpp"
#include "seccoder/error.hpp"
#include "seccoder/hash.hpp"
#include "seccoder/http_util.hpp"
#include "seccoder/integrator.hpp"
#include "seccoder/tokenize.hpp"

namespace seccoder {

using nlohmann::json;

void SamplingConfig::validate() const {
  if (!(temperature >= 0)) throw ValidationError("temperature must be >= 0");
  if (num_samples == 0) throw ValidationError("num_samples must be >= 1");
  if (max_new_tokens == 0) throw ValidationError("max_new_tokens must be >= 1");
}

// ---------------------------------------------------------------------------
// Mock

namespace {

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

const IdiomRule* active_rule(const MockLmConfig& cfg, std::string_view body) {
  for (const auto& r : cfg.rules) {
    if (!r.trigger.empty() && body.find(r.trigger) != std::string_view::npos) return &r;
  }
  for (const auto& r : cfg.rules) {
    if (r.trigger.empty()) return &r;
  }
  return nullptr;
}

}  // namespace

MockBackend::MockBackend(MockLmConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.copy_rate >= 0 && cfg_.copy_rate <= 1)) {
    throw ValidationError("copy_rate must lie in [0, 1]");
  }
}

std::vector<CompletionSample> MockBackend::complete(const std::string& prompt_text,
                                                    const SamplingConfig& cfg) {
  const std::optional<std::string> demo = extract_demo(prompt_text);
  std::string_view body = prompt_text;
  if (demo) {
    // Body starts after the first occurrence of the demo text plus its fence.
    const auto at = body.find(*demo);
    body.remove_prefix(at + demo->size());
  }
  const IdiomRule* rule = active_rule(cfg_, body);

  std::optional<std::string> safe_line;
  if (demo && rule && !rule->safe_marker.empty()) {
    for (auto line : lines_of(*demo)) {
      if (line.find(rule->safe_marker) != std::string_view::npos) {
        safe_line = std::string(trim(line));
        break;
      }
    }
  }
  auto words = tokenize_code(body);
  if (words.empty()) words.push_back("step");

  const std::uint64_t prompt_hash = fnv1a64(prompt_text);
  std::vector<CompletionSample> out;
  out.reserve(cfg.num_samples);
  for (std::size_t i = 0; i < cfg.num_samples; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    const std::uint64_t bits = splitmix64(prompt_hash ^ splitmix64(seed));
    const bool copy = safe_line && unit_interval(bits) < cfg_.copy_rate;

    std::ostringstream text;
    if (rule) text << "    " << (copy ? *safe_line : rule->unsafe_line) << '\n';
    std::uint64_t r = splitmix64(bits);
    const std::size_t fillers = 1 + static_cast<std::size_t>(r % 2);
    for (std::size_t f = 0; f < fillers; ++f) {
      r = splitmix64(r);
      text << "    " << cfg_.comment_prefix << ' ' << words[r % words.size()] << '\n';
    }
    CompletionSample s;
    s.text = text.str();
    s.sample_index = i;
    s.seed = seed;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<CompletionSample> mock_complete(const std::string& prompt_text,
                                            const SamplingConfig& cfg, const MockLmConfig& mock) {
  MockBackend backend(mock);
  return backend.complete(prompt_text, cfg);
}

// ---------------------------------------------------------------------------
// HTTP

HttpCompletionBackend::HttpCompletionBackend(HttpEndpoint endpoint, bool server_side_n)
    : endpoint_(std::move(endpoint)), server_side_n_(server_side_n) {}

namespace {

bool is_overflow(const HttpReply& reply) {
  if (reply.status != 400 && reply.status != 413) return false;
  return reply.body.find("context_length_exceeded") != std::string::npos;
}

std::vector<std::string> parse_choices(const HttpReply& reply) {
  json body;
  try {
    body = json::parse(reply.body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("completion reply is not JSON: ") + e.what());
  }
  if (!body.contains("choices") || !body["choices"].is_array()) {
    throw ProtocolError("completion reply lacks a \"choices\" array");
  }
  std::vector<std::string> out;
  for (const auto& c : body["choices"]) {
    if (!c.is_object() || !c.contains("text") || !c["text"].is_string()) {
      throw ProtocolError("completion choice lacks a string \"text\"");
    }
    out.push_back(c["text"].get<std::string>());
  }
  return out;
}

void check_status(const HttpReply& reply) {
  if (reply.status >= 500) {
    throw TransportError("completion endpoint returned HTTP " + std::to_string(reply.status));
  }
  if (reply.status != 200) {
    throw ProtocolError("completion endpoint returned HTTP " + std::to_string(reply.status) +
                        ": " + reply.body);
  }
}

}  // namespace

std::vector<CompletionSample> HttpCompletionBackend::complete(const std::string& prompt_text,
                                                              const SamplingConfig& cfg) {
  auto request = [&](std::size_t n, std::uint64_t seed) {
    return post_json(endpoint_, json{{"model", cfg.model_id},
                                     {"prompt", prompt_text},
                                     {"temperature", cfg.temperature},
                                     {"n", n},
                                     {"max_tokens", cfg.max_new_tokens},
                                     {"seed", seed}});
  };
  std::vector<CompletionSample> out(cfg.num_samples);
  for (std::size_t i = 0; i < cfg.num_samples; ++i) {
    out[i].sample_index = i;
    out[i].seed = cfg.seed + i;
  }

  if (server_side_n_) {
    HttpReply reply = request(cfg.num_samples, cfg.seed);
    if (is_overflow(reply)) {
      for (auto& s : out) s.error = "context overflow: " + reply.body;
      return out;
    }
    check_status(reply);
    auto texts = parse_choices(reply);
    if (texts.size() != cfg.num_samples) {
      throw ProtocolError("asked for " + std::to_string(cfg.num_samples) + " choices, got " +
                          std::to_string(texts.size()));
    }
    for (std::size_t i = 0; i < texts.size(); ++i) out[i].text = std::move(texts[i]);
    return out;
  }

  for (auto& s : out) {
    HttpReply reply = request(1, s.seed);
    if (is_overflow(reply)) {
      s.error = "context overflow: " + reply.body;
      continue;
    }
    check_status(reply);
    auto texts = parse_choices(reply);
    if (texts.size() != 1) {
      throw ProtocolError("asked for 1 choice, got " + std::to_string(texts.size()));
    }
    s.text = std::move(texts.front());
  }
  return out;
}

std::vector<CompletionSample> sample_completions(const std::string& prompt_text,
                                                 const SamplingConfig& cfg,
                                                 CompletionBackend& backend,
                                                 const std::string& prompt_id,
                                                 std::optional<std::string> demo_id) {
  if (prompt_text.empty()) throw ValidationError("prompt text is empty");
  cfg.validate();
  auto samples = backend.complete(prompt_text, cfg);
  if (samples.size() != cfg.num_samples) {
    throw ProtocolError("backend returned " + std::to_string(samples.size()) + " samples, expected " +
                        std::to_string(cfg.num_samples));
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].sample_index != i) throw ProtocolError("backend returned samples out of order");
    samples[i].prompt_id = prompt_id;
    samples[i].demo_id = demo_id;
  }
  return samples;
}

}  // namespace seccoder

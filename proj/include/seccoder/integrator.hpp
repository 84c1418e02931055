#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "seccoder/common.hpp"
#include "seccoder/demo_store.hpp"

namespace seccoder {

/// Prompt text with one demonstration prepended.
struct AugmentedPrompt {
  std::string text;
  std::string prompt_id;
  std::string demo_id;
  Language template_language = Language::python;
};

/// Raw template for a language, with {demo} and {body} placeholders.
std::string_view integration_template(Language lang) noexcept;

/// The demonstration block alone: the template up to {body}, with {demo}
/// filled. One trailing newline of `code` is absorbed by the closing fence.
std::string template_wrap(std::string_view code, Language lang);

/// Description, newline, code prefix. An empty prefix yields the description alone.
std::string render_plain(const PromptCase& prompt);

/// True when `text` already starts with a demonstration block.
bool starts_with_demo_block(std::string_view text) noexcept;

/// template_wrap(demo.code) + render_plain(prompt). When `context_budget` is
/// set, the token count of the result must not exceed it; the demonstration
/// is never truncated.
AugmentedPrompt integrate(const PromptCase& prompt, const SecureCodeEntry& demo,
                          std::optional<std::size_t> context_budget = std::nullopt);

/// Demonstration code embedded in a prompt built by integrate(), if any.
std::optional<std::string> extract_demo(std::string_view prompt_text);

}  // namespace seccoder

#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace seccoder {

enum class Language { python, cpp };

std::string_view to_string(Language lang) noexcept;
/// Throws ValidationError("unsupported language: ...") for anything else.
Language parse_language(std::string_view name);

/// True for strings of the form CWE-<digits>.
bool is_cwe_id(std::string_view s) noexcept;
/// Extracts the leading CWE-<digits> of a label such as "CWE-089 0-py".
std::optional<std::string> leading_cwe(std::string_view label);

std::string_view trim(std::string_view s) noexcept;

/// One evaluation scenario: an incomplete program plus what it should do.
struct PromptCase {
  std::string id;
  std::string code_prefix;
  std::string description;
  Language language = Language::python;
  std::optional<std::string> cwe_tag;
  std::optional<std::string> scenario;

  /// Identifier used for report rows.
  const std::string& scenario_id() const { return scenario ? *scenario : id; }
  /// CWE-<digits> part of cwe_tag, if any.
  std::optional<std::string> cwe() const;
};

/// Throws ValidationError when a prompt breaks its invariants.
void validate(const PromptCase& prompt);

}  // namespace seccoder

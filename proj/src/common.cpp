#include "seccoder/common.hpp"

#include <cctype>
#include <cstdio>

#include "seccoder/error.hpp"
#include "seccoder/hash.hpp"

namespace seccoder {

std::string_view to_string(Language lang) noexcept {
  switch (lang) {
    case Language::python:
      return "python";
    case Language::cpp:
      return "cpp";
  }
  return "?";
}

Language parse_language(std::string_view name) {
  if (name == "python") return Language::python;
  if (name == "cpp") return Language::cpp;
  throw ValidationError("unsupported language: \"" + std::string(name) + "\"");
}

bool is_cwe_id(std::string_view s) noexcept {
  if (s.size() < 5 || s.substr(0, 4) != "CWE-") return false;
  for (char c : s.substr(4)) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::optional<std::string> leading_cwe(std::string_view label) {
  if (label.substr(0, 4) != "CWE-") return std::nullopt;
  std::size_t end = 4;
  while (end < label.size() && std::isdigit(static_cast<unsigned char>(label[end]))) ++end;
  if (end == 4) return std::nullopt;
  if (end < label.size() && !std::isspace(static_cast<unsigned char>(label[end]))) {
    return std::nullopt;
  }
  return std::string(label.substr(0, end));
}

std::string_view trim(std::string_view s) noexcept {
  auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<std::string> PromptCase::cwe() const {
  if (!cwe_tag) return std::nullopt;
  return leading_cwe(*cwe_tag);
}

void validate(const PromptCase& prompt) {
  if (trim(prompt.description).empty()) {
    throw ValidationError("prompt " + prompt.id + ": description is empty");
  }
  if (prompt.cwe_tag && !leading_cwe(*prompt.cwe_tag)) {
    throw ValidationError("prompt " + prompt.id + ": malformed CWE tag \"" + *prompt.cwe_tag +
                          "\"");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace seccoder

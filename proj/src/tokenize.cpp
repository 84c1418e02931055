#include "seccoder/tokenize.hpp"

#include <cctype>

namespace seccoder {
namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }

template <typename Sink>
void split(std::string_view text, Sink&& sink) {
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && !is_alnum(text[i])) ++i;
    std::size_t start = i;
    while (i < n && is_alnum(text[i])) {
      const std::size_t j = i + 1;
      if (j < n && is_alnum(text[j])) {
        // fooBar: boundary before B. HTTPResponse: boundary before R.
        const bool lower_to_upper = (is_lower(text[i]) || std::isdigit(static_cast<unsigned char>(text[i]))) && is_upper(text[j]);
        const bool acronym_end =
            is_upper(text[i]) && is_upper(text[j]) && j + 1 < n && is_lower(text[j + 1]);
        if (lower_to_upper || acronym_end) {
          sink(text.substr(start, j - start));
          start = j;
        }
      }
      ++i;
    }
    if (i > start) sink(text.substr(start, i - start));
  }
}

}  // namespace

std::vector<std::string> tokenize_code(std::string_view text) {
  std::vector<std::string> out;
  split(text, [&](std::string_view tok) {
    std::string t(tok);
    for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(t));
  });
  return out;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  split(text, [&](std::string_view) { ++n; });
  return n;
}

}  // namespace seccoder

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace seccoder {

/// Lowercased code tokens. Splits on every non-alphanumeric byte and on
/// camelCase boundaries ("parseHTTPResponse" -> parse, http, response).
std::vector<std::string> tokenize_code(std::string_view text);

/// Number of tokens tokenize_code would produce.
std::size_t count_tokens(std::string_view text);

}  // namespace seccoder

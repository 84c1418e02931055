#pragma once

#include <string>

#include "json.hpp"
#include "seccoder/embedding.hpp"

namespace seccoder {

/// POSTs JSON to the endpoint with retries on transport failures. Non-2xx
/// replies are returned (status, body) for the caller to interpret.
struct HttpReply {
  int status = 0;
  std::string body;
};

HttpReply post_json(const HttpEndpoint& endpoint, const nlohmann::json& payload);

}  // namespace seccoder

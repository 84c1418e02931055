#include "seccoder/http_util.hpp"

#include <cstdlib>

#include "httplib.h"
#include "seccoder/error.hpp"

namespace seccoder {

namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL lacks a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    throw ValidationError("only http:// endpoints are supported, got " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpReply post_json(const HttpEndpoint& endpoint, const nlohmann::json& payload) {
  const SplitUrl u = split_url(endpoint.url);
  httplib::Client client(u.base);
  const auto secs = endpoint.timeout.count() / 1000;
  const auto usecs = (endpoint.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!endpoint.token_env.empty()) {
    if (const char* tok = std::getenv(endpoint.token_env.c_str()); tok && *tok) {
      headers.emplace("Authorization", std::string("Bearer ") + tok);
    }
  }
  const std::string body = payload.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= std::max(0, endpoint.retries); ++attempt) {
    auto res = client.Post(u.path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 && attempt < endpoint.retries) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    return {res->status, res->body};
  }
  throw TransportError("POST " + endpoint.url + " failed after " +
                       std::to_string(endpoint.retries + 1) + " attempt(s): " + last_error);
}

}  // namespace seccoder

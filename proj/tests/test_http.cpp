#include <atomic>
#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "seccoder/embedding.hpp"
#include "seccoder/error.hpp"
#include "seccoder/lm_gateway.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include "httplib.h"

using namespace seccoder;
using nlohmann::json;

namespace {

class LocalServer {
 public:
  LocalServer() {
    port_ = server.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }
  HttpEndpoint endpoint(const std::string& path) const {
    HttpEndpoint e;
    e.url = url(path);
    e.timeout = std::chrono::milliseconds(2000);
    e.retries = 1;
    return e;
  }

  httplib::Server server;

 private:
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("http embedder posts texts and instruction") {
  LocalServer srv;
  std::string seen_auth;
  json seen;
  srv.server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    seen_auth = req.get_header_value("Authorization");
    json vecs = json::array();
    for (const auto& t : seen["texts"]) vecs.push_back({static_cast<double>(t.get<std::string>().size()), 1.0});
    res.set_content(json{{"vectors", vecs}}.dump(), "application/json");
  });
  ::setenv("SECCODER_TEST_TOKEN", "s3cret", 1);
  auto ep = srv.endpoint("/embed");
  ep.token_env = "SECCODER_TEST_TOKEN";
  HttpEmbedder e(ep);
  const auto v = e.embed_batch({"ab", "abcd"}, "inst");
  REQUIRE(v.size() == 2);
  CHECK(v[0][0] == 2.0);
  CHECK(v[1][0] == 4.0);
  CHECK(seen["instruction"] == "inst");
  CHECK(seen_auth == "Bearer s3cret");
}

TEST_CASE("http embedder rejects malformed replies") {
  LocalServer srv;
  srv.server.Post("/short", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors": [[1.0]]})", "application/json");
  });
  srv.server.Post("/ragged", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors": [[1.0], [1.0, 2.0]]})", "application/json");
  });
  srv.server.Post("/junk", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>", "text/html");
  });
  CHECK_THROWS_AS(HttpEmbedder(srv.endpoint("/short")).embed_batch({"a", "b"}, "i"), ProtocolError);
  CHECK_THROWS_AS(HttpEmbedder(srv.endpoint("/ragged")).embed_batch({"a", "b"}, "i"), ProtocolError);
  CHECK_THROWS_AS(HttpEmbedder(srv.endpoint("/junk")).embed_batch({"a"}, "i"), ProtocolError);
}

TEST_CASE("server errors are retried then surfaced") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server.Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"vectors": [[1.0, 0.0]]})", "application/json");
  });
  srv.server.Post("/down", [&](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  CHECK(HttpEmbedder(srv.endpoint("/flaky")).embed_batch({"a"}, "i").size() == 1);
  CHECK(calls == 2);
  CHECK_THROWS_AS(HttpEmbedder(srv.endpoint("/down")).embed_batch({"a"}, "i"), TransportError);
}

TEST_CASE("unreachable endpoint is a transport error") {
  HttpEndpoint ep;
  ep.url = "http://127.0.0.1:1/embed";
  ep.timeout = std::chrono::milliseconds(500);
  ep.retries = 0;
  CHECK_THROWS_AS(HttpEmbedder(ep).embed_batch({"a"}, "i"), TransportError);
  ep.url = "https://example.invalid/embed";
  CHECK_THROWS_AS(HttpEmbedder(ep).embed_batch({"a"}, "i"), ValidationError);
}

TEST_CASE("completion backend, one call per sample") {
  LocalServer srv;
  std::vector<json> requests;
  std::mutex mu;
  srv.server.Post("/complete", [&](const httplib::Request& req, httplib::Response& res) {
    const json j = json::parse(req.body);
    {
      std::lock_guard<std::mutex> lock(mu);
      requests.push_back(j);
    }
    res.set_content(json{{"choices", {{{"text", "seed " + std::to_string(j["seed"].get<long>())}}}}}.dump(),
                    "application/json");
  });
  HttpCompletionBackend b(srv.endpoint("/complete"));
  SamplingConfig cfg;
  cfg.num_samples = 3;
  cfg.seed = 100;
  cfg.model_id = "m";
  const auto s = sample_completions("def f(", cfg, b, "p");
  REQUIRE(s.size() == 3);
  CHECK(s[2].text == "seed 102");
  CHECK(requests.size() == 3);
  CHECK(requests[0]["model"] == "m");
  CHECK(requests[0]["n"] == 1);
  CHECK(requests[0]["temperature"] == 0.4);
  CHECK(requests[0]["prompt"] == "def f(");
}

TEST_CASE("completion backend with server-side n and overflow") {
  LocalServer srv;
  srv.server.Post("/complete", [&](const httplib::Request& req, httplib::Response& res) {
    const json j = json::parse(req.body);
    json choices = json::array();
    for (int i = 0; i < j["n"].get<int>(); ++i) choices.push_back({{"text", "c" + std::to_string(i)}});
    res.set_content(json{{"choices", choices}}.dump(), "application/json");
  });
  srv.server.Post("/overflow", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content(R"({"error": {"code": "context_length_exceeded"}})", "application/json");
  });
  srv.server.Post("/few", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": [{"text": "only"}]})", "application/json");
  });
  SamplingConfig cfg;
  cfg.num_samples = 4;
  HttpCompletionBackend b(srv.endpoint("/complete"), true);
  const auto s = sample_completions("x", cfg, b);
  REQUIRE(s.size() == 4);
  CHECK(s[3].text == "c3");

  HttpCompletionBackend o(srv.endpoint("/overflow"));
  const auto e = sample_completions("x", cfg, o);
  REQUIRE(e.size() == 4);
  for (const auto& x : e) {
    REQUIRE(x.error);
    CHECK(x.error->find("context") != std::string::npos);
  }
  HttpCompletionBackend few(srv.endpoint("/few"), true);
  CHECK_THROWS_AS(sample_completions("x", cfg, few), ProtocolError);
}

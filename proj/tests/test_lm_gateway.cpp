#include <algorithm>

#include "doctest.h"
#include "seccoder/error.hpp"
#include "seccoder/integrator.hpp"
#include "seccoder/lm_gateway.hpp"

using namespace seccoder;

namespace {

std::uint64_t oracle_fnv(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

std::uint64_t oracle_mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string augmented_prompt() {
  PromptCase p;
  p.id = "p";
  p.description = "# Serve the requested file from the upload directory.";
  p.code_prefix = "def serve(filename):\n    base = \"/srv/uploads\"\n";
  const auto demo = make_entry("d0",
                               "def read_file(base, name):\n"
                               "    path = safe_join(base, name)\n"
                               "    return open(path).read()\n",
                               Language::python);
  return integrate(p, demo).text;
}

std::size_t count_with(const std::vector<CompletionSample>& s, const std::string& marker) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](const auto& x) {
    return x.text.find(marker) != std::string::npos;
  }));
}

std::vector<CompletionSample> run_mock(const std::string& prompt, double rate, std::size_t n,
                                       std::uint64_t seed = 0) {
  SamplingConfig cfg;
  cfg.num_samples = n;
  cfg.seed = seed;
  MockLmConfig m;
  m.copy_rate = rate;
  return mock_complete(prompt, cfg, m);
}

class ShortBackend final : public CompletionBackend {
 public:
  std::vector<CompletionSample> complete(const std::string&, const SamplingConfig& cfg) override {
    std::vector<CompletionSample> out(cfg.num_samples - 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].sample_index = i;
    return out;
  }
};

}  // namespace

TEST_CASE("sampling config defaults and validation") {
  SamplingConfig c;
  CHECK(c.temperature == 0.4);
  CHECK(c.num_samples == 25);
  c.num_samples = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.num_samples = 1;
  c.temperature = -0.1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("sample_completions returns exactly num_samples in order") {
  MockBackend mock;
  SamplingConfig cfg;
  cfg.seed = 1000000;
  const auto s = sample_completions(augmented_prompt(), cfg, mock, "p", "d0");
  REQUIRE(s.size() == 25);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].sample_index == i);
    CHECK(s[i].seed == 1000000 + i);
    CHECK(s[i].prompt_id == "p");
    CHECK(s[i].demo_id == std::optional<std::string>("d0"));
  }
  CHECK_THROWS_AS(sample_completions("", cfg, mock), ValidationError);
  ShortBackend short_backend;
  CHECK_THROWS_AS(sample_completions("x", cfg, short_backend), ProtocolError);
}

TEST_CASE("mock is deterministic") {
  const auto a = run_mock(augmented_prompt(), 0.8, 1, 42);
  const auto b = run_mock(augmented_prompt(), 0.8, 1, 42);
  CHECK(a[0].text == b[0].text);
  const auto c = run_mock(augmented_prompt(), 0.8, 25, 7);
  const auto d = run_mock(augmented_prompt(), 0.8, 25, 7);
  for (std::size_t i = 0; i < 25; ++i) CHECK(c[i].text == d[i].text);
}

TEST_CASE("mock copy-rate edge cases") {
  const std::string aug = augmented_prompt();
  CHECK(count_with(run_mock(aug, 0.0, 25), "safe_join(") == 0);
  CHECK(count_with(run_mock(aug, 1.0, 25), "safe_join(") == 25);
  CHECK(count_with(run_mock(aug, 1.0, 25), "path = safe_join(base, name)") == 25);
  const std::string plain = "# Serve the requested file.\ndef serve(filename):\n";
  CHECK(count_with(run_mock(plain, 1.0, 25), "safe_join(") == 0);
  CHECK(count_with(run_mock(plain, 1.0, 25), "os.path.join(base +") == 25);
  MockLmConfig bad;
  bad.copy_rate = 1.5;
  CHECK_THROWS_AS(MockBackend{bad}, ValidationError);
}

TEST_CASE("mock copy count at rate 0.6 matches the seeded draw and its frozen value") {
  const std::string aug = augmented_prompt();
  const auto s = run_mock(aug, 0.6, 25, 0);
  std::size_t expected = 0;
  for (std::uint64_t i = 0; i < 25; ++i) {
    const std::uint64_t bits = oracle_mix(oracle_fnv(aug) ^ oracle_mix(i));
    if (static_cast<double>(bits >> 11) * 0x1.0p-53 < 0.6) ++expected;
  }
  CHECK(count_with(s, "safe_join(") == expected);
  CHECK(count_with(s, "safe_join(") == 19u);
}

TEST_CASE("raising copy_rate never lowers the safe count") {
  const std::string aug = augmented_prompt();
  for (std::uint64_t seed : {0ULL, 1000000ULL, 2000000ULL, 99ULL}) {
    std::size_t prev = 0;
    for (int step = 0; step <= 20; ++step) {
      const auto c = count_with(run_mock(aug, step / 20.0, 25, seed), "safe_join(");
      CHECK(c >= prev);
      prev = c;
    }
    CHECK(prev == 25);
  }
}

TEST_CASE("mock filler comes from the prompt body") {
  const auto s = run_mock(augmented_prompt(), 0.5, 25);
  for (const auto& x : s) {
    CHECK(x.text.rfind("    ", 0) == 0);
    CHECK(x.text.find("    # ") != std::string::npos);
  }
}

TEST_CASE("rule triggers pick the idiom") {
  MockLmConfig m;
  m.copy_rate = 1.0;
  m.rules = {{"database", "execute(query, (", "cursor.execute(query % name)"},
             {"", "safe_join(", "path = os.path.join(base + name)"}};
  PromptCase p;
  p.id = "q";
  p.description = "# look the user up in the database";
  p.code_prefix = "def find(name):\n";
  const auto demo = make_entry("d", "def f(c, n):\n    c.execute(query, (n,))\n", Language::python);
  SamplingConfig cfg;
  cfg.num_samples = 5;
  const auto aug = mock_complete(integrate(p, demo).text, cfg, m);
  CHECK(count_with(aug, "c.execute(query, (n,))") == 5);
  const auto plain = mock_complete(render_plain(p), cfg, m);
  CHECK(count_with(plain, "cursor.execute(query % name)") == 5);
}

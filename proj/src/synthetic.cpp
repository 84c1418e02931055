#include "seccoder/synthetic.hpp"

#include <random>
#include <sstream>

namespace seccoder {
namespace {

struct Topic {
  const char* cwe;
  const char* trigger;
  const char* safe_line;
  const char* safe_marker;
  const char* unsafe_line;
  const char* unsafe_pattern;
  std::vector<const char*> nouns;
  std::vector<const char*> verbs;
};

const std::vector<Topic>& topics() {
  static const std::vector<Topic> t{
      {"CWE-022", "filename", "path = safe_join(base_dir, filename)", "safe_join(",
       "path = os.path.join(base_dir + filename)", "os.path.join(base_dir +",
       {"filename", "directory", "folder", "upload", "image", "document", "archive"},
       {"read", "serve", "open", "load", "fetch"}},
      {"CWE-089", "database", "cursor.execute(query, (username,))", "cursor.execute(query, (",
       "cursor.execute(query % username)", "cursor.execute(query %",
       {"database", "table", "row", "account", "record", "email", "subscriber"},
       {"insert", "delete", "select", "update", "lookup"}},
      {"CWE-078", "command", "subprocess.run([\"ping\", \"-c\", \"1\", host], shell=False)",
       "shell=False", "os.system(\"ping -c 1 \" + host)", "os.system(",
       {"command", "host", "server", "process", "network", "address", "interface"},
       {"ping", "run", "execute", "probe", "check"}},
  };
  return t;
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[rng() % v.size()];
}

}  // namespace

SyntheticSuite make_synthetic_suite(std::size_t num_prompts, std::size_t demos_per_cwe,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SyntheticSuite suite;
  const auto& ts = topics();

  std::vector<EntryRecord> records;
  for (const auto& t : ts) {
    for (std::size_t i = 0; i < demos_per_cwe; ++i) {
      const std::string verb = pick(rng, t.verbs);
      const std::string noun = pick(rng, t.nouns);
      const std::string other = pick(rng, t.nouns);
      std::ostringstream code;
      code << "def " << verb << "_" << noun << "(" << other << ", " << t.trigger << "):\n"
           << "    # " << verb << " the " << noun << " " << other << " " << t.trigger << "\n"
           << "    " << t.safe_line << "\n"
           << "    return " << noun << "\n";
      records.push_back({std::nullopt, code.str(), "python", std::string(t.cwe)});
    }
  }
  suite.store = ingest(records);

  for (std::size_t i = 0; i < num_prompts; ++i) {
    const Topic& t = ts[i % ts.size()];
    const std::string verb = pick(rng, t.verbs);
    const std::string noun = pick(rng, t.nouns);
    const std::string other = pick(rng, t.nouns);
    PromptCase p;
    p.id = "s" + std::to_string(i);
    p.language = Language::python;
    p.description = "# " + verb + " the " + noun + " for the given " + other + " " + t.trigger;
    p.code_prefix = "def " + verb + "_" + noun + "(" + other + ", " + t.trigger + "):\n";
    p.cwe_tag = std::string(t.cwe) + " " + std::to_string(i / ts.size()) + "-py";
    p.scenario = *p.cwe_tag;
    suite.prompts.push_back(std::move(p));
  }

  suite.lm.copy_rate = 0.8;
  suite.lm.rules.clear();
  for (const auto& t : ts) {
    suite.lm.rules.push_back({t.trigger, t.safe_marker, t.unsafe_line});
    suite.analyzer_patterns[t.cwe] = {t.unsafe_pattern};
  }
  return suite;
}

RunConfig synthetic_run_config(const SyntheticSuite& suite) {
  RunConfig cfg;
  cfg.lm.kind = "mock";
  cfg.lm.mock = suite.lm;
  cfg.analyzer.kind = "mock";
  cfg.analyzer.mock_patterns = suite.analyzer_patterns;
  cfg.validity.kind = "mock";
  cfg.embedder.kind = "hashed";
  cfg.embedder.dimension = 64;
  cfg.sampling.num_samples = 25;
  cfg.runs = 3;
  cfg.seeds = {0, 1000000, 2000000};
  cfg.arms = {{"none", std::nullopt}, {"dense", Strategy::dense}};
  return cfg;
}

}  // namespace seccoder

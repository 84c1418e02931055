#include "seccoder/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "seccoder/error.hpp"
#include "seccoder/hash.hpp"
#include "seccoder/integrator.hpp"
#include "seccoder/subprocess.hpp"
#include "seccoder/tokenize.hpp"

namespace seccoder {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  retriever.validate();
  sampling.validate();
  if (runs == 0) throw ValidationError("runs must be >= 1");
  if (seeds.size() != runs) {
    throw ValidationError("expected " + std::to_string(runs) + " seeds, got " +
                          std::to_string(seeds.size()));
  }
  if (arms.empty()) throw ValidationError("no arms configured");
  std::set<std::string> labels;
  for (const auto& a : arms) {
    if (a.label.empty()) throw ValidationError("arm label is empty");
    if (!labels.insert(a.label).second) throw ValidationError("duplicate arm label " + a.label);
  }
  if (top_k == 0) throw ValidationError("top_k must be >= 1");
  if (workers == 0) throw ValidationError("workers must be >= 1");
  if (!(error_budget >= 0 && error_budget <= 1)) throw ValidationError("error_budget must lie in [0, 1]");
  if (context_budget && *context_budget == 0) throw ValidationError("context_budget must be positive");
}

namespace {

json endpoint_json(const HttpEndpoint& e) {
  return {{"url", e.url},
          {"token_env", e.token_env},
          {"timeout_ms", e.timeout.count()},
          {"retries", e.retries}};
}

HttpEndpoint endpoint_from(const json& j) {
  HttpEndpoint e;
  e.url = j.value("url", "");
  e.token_env = j.value("token_env", "");
  e.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
  e.retries = j.value("retries", 2);
  return e;
}

std::string resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j[key].is_null()) return {};
  fs::path p = j[key].get<std::string>();
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal().string();
}

}  // namespace

json to_json(const RunConfig& cfg) {
  json arms = json::array();
  for (const auto& a : cfg.arms) {
    arms.push_back({{"label", a.label},
                    {"strategy", a.strategy ? json(std::string(to_string(*a.strategy))) : json()}});
  }
  json rules = json::array();
  for (const auto& r : cfg.lm.mock.rules) {
    rules.push_back({{"trigger", r.trigger}, {"safe_marker", r.safe_marker}, {"unsafe_line", r.unsafe_line}});
  }
  json lm = endpoint_json(cfg.lm.endpoint);
  lm.update({{"kind", cfg.lm.kind},
             {"copy_rate", cfg.lm.mock.copy_rate},
             {"rules", rules},
             {"comment_prefix", cfg.lm.mock.comment_prefix},
             {"server_side_n", cfg.lm.server_side_n}});
  json embedder = endpoint_json(cfg.embedder.endpoint);
  embedder.update({{"kind", cfg.embedder.kind}, {"dimension", cfg.embedder.dimension}});
  json analyzer{{"kind", cfg.analyzer.kind},
                {"patterns", cfg.analyzer.mock_patterns},
                {"command", cfg.analyzer.command},
                {"any_finding_counts", cfg.analyzer.any_finding_counts}};
  if (cfg.analyzer.query_table) analyzer["query_table"] = *cfg.analyzer.query_table;
  return {
      {"store", cfg.store_path.string()},
      {"eval_set", cfg.eval_set_path.string()},
      {"retriever",
       {{"prompt_instruction", cfg.retriever.prompt_instruction},
        {"document_instruction", cfg.retriever.document_instruction},
        {"bm25_k1", cfg.retriever.bm25_k1},
        {"bm25_b", cfg.retriever.bm25_b},
        {"seed", cfg.retriever.seed},
        {"embedder", embedder}}},
      {"sampling",
       {{"temperature", cfg.sampling.temperature},
        {"num_samples", cfg.sampling.num_samples},
        {"max_new_tokens", cfg.sampling.max_new_tokens},
        {"model_id", cfg.sampling.model_id}}},
      {"lm", lm},
      {"analyzer", analyzer},
      {"validity",
       {{"kind", cfg.validity.kind},
        {"python", cfg.validity.python},
        {"cxx", cfg.validity.cxx},
        {"invalid_marker", cfg.validity.invalid_marker}}},
      {"functional", {{"command", cfg.functional.command}, {"ks", cfg.functional.ks}}},
      {"arms", arms},
      {"runs", cfg.runs},
      {"seeds", cfg.seeds},
      {"exclude_cwes", cfg.exclude_cwes},
      {"context_budget", cfg.context_budget ? json(*cfg.context_budget) : json()},
      {"top_k", cfg.top_k},
      {"workers", cfg.workers},
      {"error_budget", cfg.error_budget},
      {"out", cfg.out_dir.string()},
  };
}

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ParseError("run config must be a JSON object");
  static const std::set<std::string> known{
      "store", "eval_set", "out", "retriever", "sampling", "lm", "analyzer", "validity", "functional",
      "arms", "runs", "seeds", "exclude_cwes", "context_budget", "top_k", "workers", "error_budget"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ParseError("run config: unknown key \"" + it.key() + "\"");
  }
  RunConfig cfg;
  try {
    cfg.store_path = resolve(j, "store", base);
    cfg.eval_set_path = resolve(j, "eval_set", base);
    if (j.contains("out")) cfg.out_dir = resolve(j, "out", base);

    if (j.contains("retriever")) {
      const auto& r = j["retriever"];
      cfg.retriever.prompt_instruction = r.value("prompt_instruction", cfg.retriever.prompt_instruction);
      cfg.retriever.document_instruction =
          r.value("document_instruction", cfg.retriever.document_instruction);
      cfg.retriever.bm25_k1 = r.value("bm25_k1", cfg.retriever.bm25_k1);
      cfg.retriever.bm25_b = r.value("bm25_b", cfg.retriever.bm25_b);
      cfg.retriever.seed = r.value("seed", cfg.retriever.seed);
      if (r.contains("embedder")) {
        const auto& e = r["embedder"];
        cfg.embedder.kind = e.value("kind", cfg.embedder.kind);
        cfg.embedder.dimension = e.value("dimension", cfg.embedder.dimension);
        cfg.embedder.endpoint = endpoint_from(e);
      }
    }
    if (j.contains("sampling")) {
      const auto& s = j["sampling"];
      cfg.sampling.temperature = s.value("temperature", cfg.sampling.temperature);
      cfg.sampling.num_samples = s.value("num_samples", cfg.sampling.num_samples);
      cfg.sampling.max_new_tokens = s.value("max_new_tokens", cfg.sampling.max_new_tokens);
      cfg.sampling.model_id = s.value("model_id", cfg.sampling.model_id);
    }
    if (j.contains("lm")) {
      const auto& l = j["lm"];
      cfg.lm.kind = l.value("kind", cfg.lm.kind);
      cfg.lm.mock.copy_rate = l.value("copy_rate", cfg.lm.mock.copy_rate);
      cfg.lm.mock.comment_prefix = l.value("comment_prefix", cfg.lm.mock.comment_prefix);
      if (l.contains("rules")) {
        cfg.lm.mock.rules.clear();
        for (const auto& r : l["rules"]) {
          cfg.lm.mock.rules.push_back({r.value("trigger", ""), r.value("safe_marker", ""),
                                       r.value("unsafe_line", "")});
        }
      }
      cfg.lm.endpoint = endpoint_from(l);
      cfg.lm.server_side_n = l.value("server_side_n", false);
    }
    if (j.contains("analyzer")) {
      const auto& a = j["analyzer"];
      cfg.analyzer.kind = a.value("kind", cfg.analyzer.kind);
      if (a.contains("patterns")) {
        cfg.analyzer.mock_patterns = a["patterns"].get<std::map<std::string, std::vector<std::string>>>();
      }
      cfg.analyzer.command = a.value("command", "");
      if (a.contains("query_table") && !a["query_table"].is_null()) {
        cfg.analyzer.query_table =
            a["query_table"].get<std::map<std::string, std::vector<std::string>>>();
      }
      cfg.analyzer.any_finding_counts = a.value("any_finding_counts", false);
    }
    if (j.contains("validity")) {
      const auto& v = j["validity"];
      cfg.validity.kind = v.value("kind", cfg.validity.kind);
      cfg.validity.python = v.value("python", cfg.validity.python);
      cfg.validity.cxx = v.value("cxx", cfg.validity.cxx);
      cfg.validity.invalid_marker = v.value("invalid_marker", cfg.validity.invalid_marker);
    }
    if (j.contains("functional")) {
      const auto& f = j["functional"];
      cfg.functional.command = f.value("command", "");
      if (f.contains("ks")) cfg.functional.ks = f["ks"].get<std::vector<std::size_t>>();
    }
    if (j.contains("arms")) {
      cfg.arms.clear();
      for (const auto& a : j["arms"]) {
        ArmConfig arm;
        arm.label = a.at("label").get<std::string>();
        if (a.contains("strategy") && !a["strategy"].is_null()) {
          const auto s = a["strategy"].get<std::string>();
          if (s != "none") arm.strategy = parse_strategy(s);
        }
        cfg.arms.push_back(std::move(arm));
      }
    }
    cfg.runs = j.value("runs", cfg.runs);
    if (j.contains("seeds")) {
      cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } else {
      cfg.seeds.clear();
      for (std::size_t r = 0; r < cfg.runs; ++r) cfg.seeds.push_back(r * 1000000ULL);
    }
    if (j.contains("exclude_cwes")) cfg.exclude_cwes = j["exclude_cwes"].get<std::vector<std::string>>();
    if (j.contains("context_budget") && !j["context_budget"].is_null()) {
      cfg.context_budget = j["context_budget"].get<std::size_t>();
    }
    cfg.top_k = j.value("top_k", cfg.top_k);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.error_budget = j.value("error_budget", cfg.error_budget);
  } catch (const json::exception& e) {
    throw ParseError(std::string("run config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const fs::path base = fs::absolute(path).parent_path();
  if (j.is_object() && j.contains("manifest_version")) return run_config_from_json(j.at("config"), base);
  return run_config_from_json(j, base);
}

Backends make_backends(const RunConfig& cfg) {
  Backends b;
  std::shared_ptr<Embedder> inner;
  if (cfg.embedder.kind == "hashed") {
    inner = std::make_shared<HashedBagEmbedder>(cfg.embedder.dimension);
  } else if (cfg.embedder.kind == "http") {
    inner = std::make_shared<HttpEmbedder>(cfg.embedder.endpoint);
  } else {
    throw ValidationError("unknown embedder kind \"" + cfg.embedder.kind + "\"");
  }
  b.embedder = std::make_shared<CachingEmbedder>(inner);

  if (cfg.lm.kind == "mock") {
    b.lm = std::make_shared<MockBackend>(cfg.lm.mock);
  } else if (cfg.lm.kind == "http") {
    b.lm = std::make_shared<HttpCompletionBackend>(cfg.lm.endpoint, cfg.lm.server_side_n);
  } else {
    throw ValidationError("unknown lm kind \"" + cfg.lm.kind + "\"");
  }

  if (cfg.validity.kind == "mock") {
    b.checker = std::make_shared<MockChecker>(cfg.validity.invalid_marker);
  } else if (cfg.validity.kind == "compiler") {
    b.checker = std::make_shared<CompilerChecker>(cfg.validity.python, cfg.validity.cxx);
  } else {
    throw ValidationError("unknown validity kind \"" + cfg.validity.kind + "\"");
  }

  if (cfg.analyzer.kind == "mock") {
    auto mock = std::make_shared<MockAnalyzer>(cfg.analyzer.mock_patterns);
    b.query_table = mock->query_table();
    b.analyzer = mock;
  } else if (cfg.analyzer.kind == "sarif") {
    b.analyzer = std::make_shared<SarifAnalyzer>(cfg.analyzer.command);
    b.query_table = CweQueryTable::defaults();
  } else {
    throw ValidationError("unknown analyzer kind \"" + cfg.analyzer.kind + "\"");
  }
  if (cfg.analyzer.query_table) b.query_table = CweQueryTable(*cfg.analyzer.query_table);

  if (!cfg.functional.command.empty()) {
    b.functional = std::make_shared<FunctionalRunner>(cfg.functional.command);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation set

json to_json(const PromptCase& p) {
  json j{{"id", p.id},
         {"code_prefix", p.code_prefix},
         {"description", p.description},
         {"language", std::string(to_string(p.language))}};
  if (p.cwe_tag) j["cwe"] = *p.cwe_tag;
  if (p.scenario) j["scenario"] = *p.scenario;
  return j;
}

std::vector<PromptCase> parse_prompts(std::string_view jsonl) {
  std::vector<PromptCase> out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const std::string_view line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      PromptCase p;
      p.id = j.contains("id") ? j["id"].get<std::string>() : "p" + std::to_string(out.size());
      p.code_prefix = j.value("code_prefix", "");
      p.description = j.at("description").get<std::string>();
      p.language = parse_language(j.at("language").get<std::string>());
      if (j.contains("cwe") && !j["cwe"].is_null()) p.cwe_tag = j["cwe"].get<std::string>();
      if (j.contains("scenario") && !j["scenario"].is_null()) p.scenario = j["scenario"].get<std::string>();
      validate(p);
      if (!ids.insert(p.id).second) throw ValidationError("duplicate prompt id \"" + p.id + "\"");
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::vector<PromptCase> load_prompts(const fs::path& path) { return parse_prompts(read_file(path)); }

// ---------------------------------------------------------------------------
// Execution

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// One retriever per prompt language; a language absent from the store has none.
struct LanguageRetrievers {
  std::optional<Retriever> python;
  std::optional<Retriever> cpp;

  const Retriever* for_language(Language l) const {
    const auto& r = l == Language::python ? python : cpp;
    return r ? &*r : nullptr;
  }
};

LanguageRetrievers make_retrievers(const RunConfig& cfg, Strategy strategy, const DemoStore& store,
                                   const std::shared_ptr<Embedder>& embedder) {
  RetrieverConfig rc = cfg.retriever;
  rc.strategy = strategy;
  LanguageRetrievers out;
  for (Language l : {Language::python, Language::cpp}) {
    DemoStore slice = filter_by_language(store, l);
    if (slice.empty()) continue;
    (l == Language::python ? out.python : out.cpp).emplace(std::move(slice), rc, embedder);
  }
  return out;
}

std::uint64_t cell_salt(const std::string& prompt_id, std::uint64_t seed) {
  return fnv1a64(prompt_id) ^ splitmix64(seed);
}

PromptRecord generate_cell(const RunConfig& cfg, const ArmConfig& arm, const PromptCase& prompt,
                           std::size_t run, const LanguageRetrievers* retrievers,
                           Backends& backends) {
  PromptRecord rec;
  rec.arm = arm.label;
  rec.run = run;
  rec.seed = cfg.seeds.at(run);
  rec.prompt_id = prompt.id;
  rec.scenario_id = prompt.scenario_id();
  rec.cwe = prompt.cwe();
  try {
    std::string text;
    if (arm.strategy) {
      const Retriever* r = retrievers->for_language(prompt.language);
      if (!r) {
        throw ValidationError("no " + std::string(to_string(prompt.language)) +
                              " demonstrations in the store");
      }
      const auto ranked = r->retrieve(prompt, cfg.top_k, cell_salt(prompt.id, rec.seed));
      const auto& best = ranked.front();
      rec.demo_id = best.entry_id;
      rec.retrieval_score = best.score;
      text = integrate(prompt, *r->store().find(best.entry_id), cfg.context_budget).text;
    } else {
      text = render_plain(prompt);
      if (cfg.context_budget && count_tokens(text) > *cfg.context_budget) {
        throw ValidationError("prompt " + prompt.id + " has " + std::to_string(count_tokens(text)) +
                              " tokens, over the context budget of " +
                              std::to_string(*cfg.context_budget));
      }
    }
    rec.prompt_hash = hex64(fnv1a64(text));
    SamplingConfig sc = cfg.sampling;
    sc.seed = rec.seed;
    rec.samples = sample_completions(text, sc, *backends.lm, prompt.id, rec.demo_id);
  } catch (const Error& e) {
    rec.error = e.what();
    rec.samples.clear();
  }
  return rec;
}

json finding_json(const Finding& f) {
  return {{"rule_id", f.rule_id}, {"message", f.message}, {"line", f.line}, {"cwes", f.cwes}};
}

Finding finding_from(const json& j) {
  return {j.at("rule_id").get<std::string>(), j.value("message", ""), j.value("line", std::size_t{0}),
          j.value("cwes", std::vector<std::string>{})};
}

json opt_num(const std::optional<double>& v) { return v ? json(*v) : json(); }

json scenario_json(const ScenarioResult& s) {
  json pass = json::object();
  for (const auto& [k, v] : s.pass_at) pass[std::to_string(k)] = v;
  return {{"scenario_id", s.scenario_id},
          {"prompt_id", s.prompt_id},
          {"cwe", s.cwe ? json(*s.cwe) : json()},
          {"n_sampled", s.n_sampled},
          {"n_duplicates", s.n_duplicates},
          {"n_invalid", s.n_invalid},
          {"n_unadjudicated", s.n_unadjudicated},
          {"n_valid", s.n_valid},
          {"n_secure", s.n_secure},
          {"security_rate", opt_num(s.security_rate)},
          {"pass_at", pass}};
}

json quality_json(const RetrievalQuality& q) {
  return {{"accuracy_at_1", q.accuracy_at_1},
          {"avg_min_rank", opt_num(q.avg_min_rank)},
          {"excluded_prompts", q.excluded}};
}

}  // namespace

json to_json(const CompletionSample& s) {
  json j{{"text", s.text},
         {"sample_index", s.sample_index},
         {"seed", s.seed},
         {"prompt_id", s.prompt_id},
         {"demo_id", s.demo_id ? json(*s.demo_id) : json()}};
  if (s.error) j["error"] = *s.error;
  return j;
}

CompletionSample sample_from_json(const json& j) {
  CompletionSample s;
  s.text = j.at("text").get<std::string>();
  s.sample_index = j.at("sample_index").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.prompt_id = j.value("prompt_id", "");
  if (j.contains("demo_id") && !j["demo_id"].is_null()) s.demo_id = j["demo_id"].get<std::string>();
  if (j.contains("error") && !j["error"].is_null()) s.error = j["error"].get<std::string>();
  return s;
}

json to_json(const PromptRecord& r) {
  json samples = json::array();
  for (const auto& s : r.samples) samples.push_back(to_json(s));
  return {{"arm", r.arm},
          {"run", r.run},
          {"seed", r.seed},
          {"prompt_id", r.prompt_id},
          {"scenario_id", r.scenario_id},
          {"cwe", r.cwe ? json(*r.cwe) : json()},
          {"demo_id", r.demo_id ? json(*r.demo_id) : json()},
          {"retrieval_score", opt_num(r.retrieval_score)},
          {"prompt_hash", r.prompt_hash},
          {"error", r.error ? json(*r.error) : json()},
          {"samples", samples}};
}

PromptRecord prompt_record_from_json(const json& j) {
  PromptRecord r;
  r.arm = j.at("arm").get<std::string>();
  r.run = j.at("run").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.scenario_id = j.at("scenario_id").get<std::string>();
  if (!j["cwe"].is_null()) r.cwe = j["cwe"].get<std::string>();
  if (!j["demo_id"].is_null()) r.demo_id = j["demo_id"].get<std::string>();
  if (!j["retrieval_score"].is_null()) r.retrieval_score = j["retrieval_score"].get<double>();
  r.prompt_hash = j.value("prompt_hash", "");
  if (!j["error"].is_null()) r.error = j["error"].get<std::string>();
  for (const auto& s : j.at("samples")) r.samples.push_back(sample_from_json(s));
  return r;
}

json to_json(const EvaluationReport& report) {
  json scen = json::array();
  for (const auto& s : report.scenarios) {
    json rates = json::array();
    for (const auto& r : s.run_rates) rates.push_back(opt_num(r));
    scen.push_back({{"scenario_id", s.scenario_id}, {"run_rates", rates}, {"mean_rate", opt_num(s.mean_rate)}});
  }
  json runs = json::array();
  for (const auto& r : report.runs) {
    json rows = json::array();
    for (const auto& s : r.scenarios) rows.push_back(scenario_json(s));
    runs.push_back({{"seed", r.seed}, {"scenarios", rows}});
  }
  return {{"seeds", report.seeds},
          {"security_rate", opt_num(report.security_rate)},
          {"scenarios", scen},
          {"runs", runs},
          {"warnings", report.warnings}};
}

std::vector<PromptRecord> generate_arm(const RunConfig& cfg, const ArmConfig& arm,
                                       const DemoStore& store,
                                       const std::vector<PromptCase>& prompts, Backends& backends) {
  std::optional<LanguageRetrievers> retrievers;
  if (arm.strategy) {
    if (store.empty()) throw ValidationError("empty demonstration store");
    retrievers = make_retrievers(cfg, *arm.strategy, store, backends.embedder);
  }
  const std::size_t cells = cfg.runs * prompts.size();
  std::vector<PromptRecord> out(cells);
  parallel_for(cells, cfg.workers, [&](std::size_t i) {
    const std::size_t run = i / prompts.size();
    const std::size_t p = i % prompts.size();
    out[i] = generate_cell(cfg, arm, prompts[p], run, retrievers ? &*retrievers : nullptr, backends);
  });
  return out;
}

std::vector<EvaluatedRecord> evaluate_records(const RunConfig& cfg,
                                              const std::vector<PromptRecord>& records,
                                              const std::vector<PromptCase>& prompts,
                                              Backends& backends) {
  std::unordered_map<std::string, const PromptCase*> by_id;
  for (const auto& p : prompts) by_id[p.id] = &p;
  std::vector<EvaluatedRecord> out(records.size());
  parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
    EvaluatedRecord& ev = out[i];
    ev.record = records[i];
    auto it = by_id.find(ev.record.prompt_id);
    if (it == by_id.end()) throw ValidationError("record for unknown prompt " + ev.record.prompt_id);
    const PromptCase& prompt = *it->second;
    if (!ev.record.error) {
      try {
        std::vector<std::string> warnings;
        ev.verdicts = evaluate_samples(ev.record.samples, prompt, *backends.checker, *backends.analyzer,
                                       backends.query_table, cfg.analyzer.any_finding_counts, &warnings);
        ev.result = summarize_scenario(prompt.scenario_id(), prompt.id, prompt.cwe(), ev.verdicts);
        if (backends.functional) {
          std::size_t n = 0, c = 0;
          for (const auto& s : ev.record.samples) {
            if (s.error) continue;
            ++n;
            if (backends.functional->passes(prompt.code_prefix + s.text, prompt.language)) ++c;
          }
          for (std::size_t k : cfg.functional.ks) {
            if (k >= 1 && k <= n) ev.result.pass_at[k] = pass_at_k(n, c, k);
          }
        }
        ev.warnings = std::move(warnings);
      } catch (const Error& e) {
        ev.record.error = e.what();
        ev.verdicts.clear();
      }
    }
    if (ev.record.error) {
      ev.result = ScenarioResult{};
      ev.result.scenario_id = prompt.scenario_id();
      ev.result.prompt_id = prompt.id;
      ev.result.cwe = prompt.cwe();
    }
  });
  return out;
}

EvaluationReport report_for_arm(const RunConfig& cfg, const std::string& arm,
                                const std::vector<EvaluatedRecord>& records) {
  std::vector<RunReport> runs(cfg.runs);
  for (std::size_t r = 0; r < cfg.runs; ++r) runs[r].seed = cfg.seeds[r];
  for (const auto& ev : records) {
    if (ev.record.arm != arm) continue;
    runs.at(ev.record.run).scenarios.push_back(ev.result);
  }
  EvaluationReport rep = aggregate(runs);
  for (const auto& ev : records) {
    if (ev.record.arm != arm) continue;
    rep.warnings.insert(rep.warnings.end(), ev.warnings.begin(), ev.warnings.end());
    if (ev.record.error) {
      rep.warnings.push_back("prompt " + ev.record.prompt_id + " run " + std::to_string(ev.record.run) +
                             " failed: " + *ev.record.error);
    }
  }
  return rep;
}

namespace {

RetrievalQuality quality_from_audits(const std::vector<RetrievalAudit>& audits) {
  RetrievalQuality q;
  if (audits.empty()) return q;
  q.accuracy_at_1 = retrieval_accuracy(audits, 1);
  for (const auto& a : audits) q.excluded += a.first_match_rank ? 0 : 1;
  if (q.excluded < audits.size()) q.avg_min_rank = avg_min_rank(audits).average;
  return q;
}

RetrievalAudit full_audit(const Retriever& r, const PromptCase& p, std::uint64_t seed) {
  return make_audit(p, r.store(), r.retrieve(p, r.store().size(), cell_salt(p.id, seed)));
}

}  // namespace

RetrievalQuality retrieval_quality(const Retriever& retriever,
                                   const std::vector<PromptCase>& prompts, std::uint64_t seed) {
  std::vector<RetrievalAudit> audits;
  for (const auto& p : prompts) audits.push_back(full_audit(retriever, p, seed));
  return quality_from_audits(audits);
}

namespace {

RetrievalQuality arm_quality(const RunConfig& cfg, Strategy s, const DemoStore& store,
                             const std::vector<PromptCase>& prompts, Backends& backends) {
  const LanguageRetrievers rs = make_retrievers(cfg, s, store, backends.embedder);
  std::vector<RetrievalAudit> audits;
  for (const auto& p : prompts) {
    if (const Retriever* r = rs.for_language(p.language)) {
      audits.push_back(full_audit(*r, p, cfg.seeds.front()));
    }
  }
  return quality_from_audits(audits);
}

std::vector<PromptCase> without_excluded(const RunConfig& cfg, const std::vector<PromptCase>& prompts) {
  std::set<std::string> skip;
  for (const auto& c : cfg.exclude_cwes) {
    if (auto n = normalize_cwe(c)) skip.insert(*n);
  }
  std::vector<PromptCase> out;
  for (const auto& p : prompts) {
    const auto c = p.cwe();
    if (c && skip.count(normalize_cwe(*c).value_or(*c))) continue;
    out.push_back(p);
  }
  return out;
}

json manifest_record(const EvaluatedRecord& ev) {
  json j = to_json(ev.record);
  json samples = json::array();
  for (std::size_t i = 0; i < ev.record.samples.size(); ++i) {
    const auto& s = ev.record.samples[i];
    json sj{{"index", s.sample_index}, {"seed", s.seed}, {"hash", hex64(fnv1a64(s.text))}};
    if (s.error) sj["error"] = *s.error;
    if (i < ev.verdicts.size()) {
      const auto& v = ev.verdicts[i];
      json findings = json::array();
      for (const auto& f : v.findings) findings.push_back(finding_json(f));
      sj.update({{"reason", std::string(to_string(v.reason))},
                 {"secure", v.secure ? json(*v.secure) : json()},
                 {"unadjudicated", v.unadjudicated},
                 {"findings", findings}});
    }
    samples.push_back(sj);
  }
  j["samples"] = samples;
  j["result"] = scenario_json(ev.result);
  return j;
}

std::string tool_compiler() {
#ifdef __VERSION__
  return __VERSION__;
#else
  return "unknown";
#endif
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const DemoStore& store,
                            const std::vector<PromptCase>& all_prompts, Backends& backends) {
  cfg.validate();
  if (all_prompts.empty()) throw ValidationError("empty evaluation set");
  const std::vector<PromptCase> prompts = without_excluded(cfg, all_prompts);
  if (prompts.empty()) throw ValidationError("every prompt is excluded by exclude_cwes");

  PipelineResult result;
  for (const auto& arm : cfg.arms) {
    auto generated = generate_arm(cfg, arm, store, prompts, backends);
    auto evaluated = evaluate_records(cfg, generated, prompts, backends);
    ArmReport ar;
    ar.label = arm.label;
    ar.strategy = arm.strategy;
    ar.report = report_for_arm(cfg, arm.label, evaluated);
    if (arm.strategy) ar.retrieval_quality = arm_quality(cfg, *arm.strategy, store, prompts, backends);
    result.arms.push_back(std::move(ar));
    for (auto& ev : evaluated) result.records.push_back(std::move(ev));
  }
  result.total_cells = result.records.size();
  for (const auto& ev : result.records) result.errored_cells += ev.record.error ? 1 : 0;
  result.over_error_budget = static_cast<double>(result.errored_cells) >
                             cfg.error_budget * static_cast<double>(result.total_cells);

  json records = json::array();
  for (const auto& ev : result.records) records.push_back(manifest_record(ev));
  json arms = json::array();
  for (const auto& a : result.arms) {
    arms.push_back({{"label", a.label},
                    {"strategy", a.strategy ? json(std::string(to_string(*a.strategy))) : json()},
                    {"report", to_json(a.report)},
                    {"retrieval_quality", a.retrieval_quality ? quality_json(*a.retrieval_quality) : json()}});
  }
  std::string store_digest;
  for (const auto& e : store.entries()) store_digest += e.id + '\0' + e.code + '\0';
  result.manifest = {
      {"manifest_version", 1},
      {"tool", {{"name", "seccoder"}, {"version", SECCODER_VERSION}, {"compiler", tool_compiler()}}},
      {"config", to_json(cfg)},
      {"store", {{"size", store.size()}, {"hash", hex64(fnv1a64(store_digest))}}},
      {"evaluation_set", {{"size", prompts.size()}, {"excluded", all_prompts.size() - prompts.size()}}},
      {"records", records},
      {"report", {{"arms", arms}, {"total_cells", result.total_cells}, {"errored_cells", result.errored_cells}}},
      {"artifacts", {{"samples", "samples.jsonl"}, {"report", "report.json"}, {"table", "report.txt"}}},
  };
  return result;
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  std::vector<PromptCase> prompts = load_prompts(cfg.eval_set_path);
  if (prompts.empty()) throw ValidationError("empty evaluation set");
  DemoStore store = load_store(cfg.store_path);
  Backends backends = make_backends(cfg);
  return run_pipeline(cfg, store, prompts, backends);
}

void write_outputs(const RunConfig& cfg, const PipelineResult& result) {
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "manifest.json", result.manifest.dump(2) + "\n");
  std::string samples;
  for (const auto& ev : result.records) {
    for (const auto& s : ev.record.samples) {
      json j = to_json(s);
      j["arm"] = ev.record.arm;
      j["run"] = ev.record.run;
      samples += j.dump() + "\n";
    }
  }
  write_file(cfg.out_dir / "samples.jsonl", samples);
  write_file(cfg.out_dir / "report.json", result.manifest.at("report").dump(2) + "\n");
  write_file(cfg.out_dir / "report.txt", format_report_table(result.arms));
}

std::vector<std::pair<std::string, EvaluationReport>> reports_from_manifest(const json& manifest) {
  const RunConfig cfg = run_config_from_json(manifest.at("config"));
  std::vector<EvaluatedRecord> records;
  for (const auto& rj : manifest.at("records")) {
    EvaluatedRecord ev;
    ev.record.arm = rj.at("arm").get<std::string>();
    ev.record.run = rj.at("run").get<std::size_t>();
    ev.record.seed = rj.at("seed").get<std::uint64_t>();
    ev.record.prompt_id = rj.at("prompt_id").get<std::string>();
    ev.record.scenario_id = rj.at("scenario_id").get<std::string>();
    if (!rj["cwe"].is_null()) ev.record.cwe = rj["cwe"].get<std::string>();
    if (!rj["error"].is_null()) ev.record.error = rj["error"].get<std::string>();
    if (ev.record.error) {
      ev.result.scenario_id = ev.record.scenario_id;
      ev.result.prompt_id = ev.record.prompt_id;
      ev.result.cwe = ev.record.cwe;
    } else {
      for (const auto& sj : rj.at("samples")) {
        SampleVerdict v;
        v.sample_index = sj.at("index").get<std::size_t>();
        v.hash = sj.at("hash").get<std::string>();
        v.reason = parse_validity_reason(sj.at("reason").get<std::string>());
        if (!sj["secure"].is_null()) v.secure = sj["secure"].get<bool>();
        v.unadjudicated = sj.value("unadjudicated", false);
        for (const auto& f : sj.at("findings")) v.findings.push_back(finding_from(f));
        ev.verdicts.push_back(std::move(v));
      }
      ev.result = summarize_scenario(ev.record.scenario_id, ev.record.prompt_id, ev.record.cwe, ev.verdicts);
    }
    records.push_back(std::move(ev));
  }
  std::vector<std::pair<std::string, EvaluationReport>> out;
  for (const auto& arm : cfg.arms) out.emplace_back(arm.label, report_for_arm(cfg, arm.label, records));
  return out;
}

namespace {

std::string fmt_rate(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << *v;
  return ss.str();
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) out << "  ";
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << rows[i][c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << rows[i][c];
      }
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace

std::string format_report_table(const std::vector<ArmReport>& arms) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Scenario"};
  for (const auto& a : arms) header.push_back(a.label);
  rows.push_back(header);
  if (!arms.empty()) {
    for (std::size_t s = 0; s < arms.front().report.scenarios.size(); ++s) {
      std::vector<std::string> row{arms.front().report.scenarios[s].scenario_id};
      for (const auto& a : arms) {
        row.push_back(s < a.report.scenarios.size() ? fmt_rate(a.report.scenarios[s].mean_rate) : "-");
      }
      rows.push_back(row);
    }
  }
  std::vector<std::string> avg{"Average"};
  for (const auto& a : arms) avg.push_back(fmt_rate(a.report.security_rate));
  rows.push_back(avg);
  return render_table(rows);
}

std::string ComparisonTable::text() const {
  std::vector<std::vector<std::string>> t{{"Strategy", "Security rate", "Accuracy@1", "Avg min rank"}};
  for (const auto& r : rows) {
    t.push_back({r.label, fmt_rate(r.security_rate), fmt_rate(r.quality.accuracy_at_1),
                 fmt_rate(r.quality.avg_min_rank)});
  }
  return render_table(t);
}

json ComparisonTable::to_json() const {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"label", r.label},
                   {"strategy", std::string(seccoder::to_string(r.strategy))},
                   {"security_rate", opt_num(r.security_rate)},
                   {"retrieval_quality", quality_json(r.quality)}});
  }
  return out;
}

namespace {

void require_comparable(const RunConfig& cfg) {
  std::set<Strategy> strategies;
  for (const auto& a : cfg.arms) {
    if (a.strategy) strategies.insert(*a.strategy);
  }
  if (strategies.size() < 2) {
    throw ValidationError("compare needs arms covering at least two retrieval strategies");
  }
}

}  // namespace

ComparisonTable compare_retrievers(const RunConfig& cfg, const PipelineResult& result) {
  require_comparable(cfg);
  ComparisonTable t;
  for (const auto& a : result.arms) {
    if (!a.strategy) continue;
    t.rows.push_back({a.label, *a.strategy, a.report.security_rate, a.retrieval_quality.value_or(RetrievalQuality{})});
  }
  return t;
}

ComparisonTable compare_retrievers(const RunConfig& cfg) {
  require_comparable(cfg);
  return compare_retrievers(cfg, run_pipeline(cfg));
}

std::size_t expand_store_file(const fs::path& store_path, const fs::path& entry_path,
                              std::optional<std::size_t> budget) {
  DemoStore store = fs::exists(store_path) ? load_store(store_path) : DemoStore{};
  store = store.with_budget(budget);
  const std::string text = read_file(entry_path);
  std::vector<EntryRecord> recs = parse_records(text);
  if (recs.size() != 1) {
    throw ValidationError("entry file must hold exactly one record, found " + std::to_string(recs.size()));
  }
  const EntryRecord& r = recs.front();
  std::string id = r.id ? *r.id : "d" + std::to_string(store.size());
  DemoStore grown = expand(store, make_entry(std::move(id), r.code, parse_language(r.language), r.cwe));
  const fs::path tmp = store_path.string() + ".tmp";
  save_store(grown, tmp);
  fs::rename(tmp, store_path);
  return grown.size();
}

}  // namespace seccoder

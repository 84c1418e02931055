#include <filesystem>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "seccoder/error.hpp"
#include "seccoder/pipeline.hpp"
#include "seccoder/subprocess.hpp"
#include "seccoder/synthetic.hpp"

namespace fs = std::filesystem;
using namespace seccoder;

namespace {

constexpr int kOverBudget = 2;

struct Common {
  std::string config;
  std::string store;
  std::string eval_set;
  std::vector<std::string> arms;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool mock_lm = false;
  bool mock_analyzer = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run config (JSON) or a previous manifest.json");
  cmd->add_option("--store", c.store, "Demonstration store (JSONL)");
  cmd->add_option("--eval-set", c.eval_set, "Evaluation scenarios (JSONL)");
  cmd->add_option("--arm", c.arms, "Only run the named arm (repeatable)");
  cmd->add_option("--seed", c.seed, "Base seed; run r uses seed + r * 1000000");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_flag("--mock-lm", c.mock_lm, "Use the built-in mock completion model");
  cmd->add_flag("--mock-analyzer", c.mock_analyzer, "Use the built-in substring analyzer");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (!c.store.empty()) cfg.store_path = c.store;
  if (!c.eval_set.empty()) cfg.eval_set_path = c.eval_set;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.seed) {
    for (std::size_t r = 0; r < cfg.runs; ++r) cfg.seeds[r] = *c.seed + r * 1000000ULL;
  }
  if (c.mock_lm) cfg.lm.kind = "mock";
  if (c.mock_analyzer) {
    cfg.analyzer.kind = "mock";
    cfg.analyzer.query_table.reset();
  }
  if (!c.arms.empty()) {
    std::vector<ArmConfig> keep;
    for (const auto& label : c.arms) {
      auto it = std::find_if(cfg.arms.begin(), cfg.arms.end(),
                             [&](const ArmConfig& a) { return a.label == label; });
      if (it == cfg.arms.end()) throw ValidationError("no arm labelled \"" + label + "\" in the config");
      keep.push_back(*it);
    }
    cfg.arms = std::move(keep);
  }
  if (cfg.store_path.empty()) throw ValidationError("no store given (--store or config store)");
  if (cfg.eval_set_path.empty()) throw ValidationError("no evaluation set given (--eval-set or config eval_set)");
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_lines(const std::string& all) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < all.size()) {
    auto nl = all.find('\n', pos);
    if (nl == std::string::npos) nl = all.size();
    out.push_back(all.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

void print_warnings(const std::vector<ArmReport>& arms) {
  for (const auto& a : arms) {
    for (const auto& w : a.report.warnings) std::cerr << "warning [" << a.label << "]: " << w << "\n";
  }
}

int cmd_ingest(const std::string& input, const std::string& store, std::optional<long long> budget) {
  DemoStore s = ingest(read_records(input));
  const std::size_t before = s.size();
  if (budget) s = filter_by_budget(s, *budget);
  save_store(s, store);
  std::cout << s.size() << "\n";
  if (s.size() != before) std::cerr << before - s.size() << " entries over the token budget dropped\n";
  return 0;
}

int cmd_retrieve(const Common& c, const std::string& strategy, std::size_t k) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (!c.store.empty()) cfg.store_path = c.store;
  if (!c.eval_set.empty()) cfg.eval_set_path = c.eval_set;
  if (c.seed) cfg.retriever.seed = *c.seed;
  cfg.retriever.strategy = parse_strategy(strategy);
  const DemoStore store = load_store(cfg.store_path);
  const auto prompts = load_prompts(cfg.eval_set_path);
  const Backends b = make_backends(cfg);
  for (const auto& p : prompts) {
    const DemoStore slice = filter_by_language(store, p.language);
    nlohmann::json ranked = nlohmann::json::array();
    if (!slice.empty()) {
      Retriever r(slice, cfg.retriever, b.embedder);
      for (const auto& x : r.retrieve(p, k)) {
        const auto* e = slice.find(x.entry_id);
        ranked.push_back({{"rank", x.rank},
                          {"entry_id", x.entry_id},
                          {"score", x.score},
                          {"cwe", e->cwe_tag ? nlohmann::json(*e->cwe_tag) : nlohmann::json()}});
      }
    }
    std::cout << nlohmann::json{{"prompt_id", p.id}, {"results", ranked}}.dump() << "\n";
  }
  return 0;
}

int cmd_generate(const Common& c) {
  const RunConfig cfg = resolve(c);
  const auto prompts = load_prompts(cfg.eval_set_path);
  if (prompts.empty()) throw ValidationError("empty evaluation set");
  const DemoStore store = load_store(cfg.store_path);
  Backends b = make_backends(cfg);
  std::string lines;
  std::size_t cells = 0, errors = 0;
  for (const auto& arm : cfg.arms) {
    for (const auto& rec : generate_arm(cfg, arm, store, prompts, b)) {
      lines += to_json(rec).dump() + "\n";
      ++cells;
      if (rec.error) {
        ++errors;
        std::cerr << "warning [" << arm.label << "]: prompt " << rec.prompt_id << " run " << rec.run
                  << ": " << *rec.error << "\n";
      }
    }
  }
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "generated.jsonl", lines);
  write_file(cfg.out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  std::cout << cells << " cells written to " << (cfg.out_dir / "generated.jsonl").string() << "\n";
  return static_cast<double>(errors) > cfg.error_budget * static_cast<double>(cells) ? kOverBudget : 0;
}

int cmd_evaluate(const Common& c, const std::string& samples_path) {
  const RunConfig cfg = resolve(c);
  const auto prompts = load_prompts(cfg.eval_set_path);
  const fs::path in = samples_path.empty() ? cfg.out_dir / "generated.jsonl" : fs::path(samples_path);
  std::vector<PromptRecord> records;
  std::size_t line = 0;
  for (const auto& text : split_lines(read_file(in))) {
    ++line;
    if (trim(text).empty()) continue;
    try {
      records.push_back(prompt_record_from_json(nlohmann::json::parse(text)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(in.string() + ": " + e.what(), line);
    }
  }
  Backends b = make_backends(cfg);
  const auto evaluated = evaluate_records(cfg, records, prompts, b);
  std::vector<ArmReport> arms;
  nlohmann::json out = nlohmann::json::array();
  std::size_t errors = 0;
  for (const auto& ev : evaluated) errors += ev.record.error ? 1 : 0;
  for (const auto& arm : cfg.arms) {
    ArmReport ar;
    ar.label = arm.label;
    ar.strategy = arm.strategy;
    ar.report = report_for_arm(cfg, arm.label, evaluated);
    out.push_back({{"label", ar.label}, {"report", to_json(ar.report)}});
    arms.push_back(std::move(ar));
  }
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "report.json", nlohmann::json{{"arms", out}}.dump(2) + "\n");
  const std::string table = format_report_table(arms);
  write_file(cfg.out_dir / "report.txt", table);
  print_warnings(arms);
  std::cout << table;
  return static_cast<double>(errors) > cfg.error_budget * static_cast<double>(evaluated.size())
             ? kOverBudget
             : 0;
}

int cmd_run(const Common& c) {
  const RunConfig cfg = resolve(c);
  const PipelineResult r = run_pipeline(cfg);
  write_outputs(cfg, r);
  print_warnings(r.arms);
  std::cout << format_report_table(r.arms);
  std::cout << "manifest: " << (cfg.out_dir / "manifest.json").string() << "\n";
  if (r.over_error_budget) {
    std::cerr << "error: " << r.errored_cells << " of " << r.total_cells
              << " cells failed, over the error budget of " << cfg.error_budget * 100 << "%\n";
    return kOverBudget;
  }
  return 0;
}

int cmd_compare(const Common& c) {
  const RunConfig cfg = resolve(c);
  const PipelineResult r = run_pipeline(cfg);
  const ComparisonTable t = compare_retrievers(cfg, r);
  write_outputs(cfg, r);
  write_file(cfg.out_dir / "comparison.json", t.to_json().dump(2) + "\n");
  std::cout << t.text();
  return r.over_error_budget ? kOverBudget : 0;
}

int cmd_synth(const std::string& out_dir, std::size_t prompts, std::size_t demos, std::uint64_t seed) {
  const SyntheticSuite suite = make_synthetic_suite(prompts, demos, seed);
  const fs::path dir = out_dir;
  fs::create_directories(dir);
  save_store(suite.store, dir / "store.jsonl");
  std::string lines;
  for (const auto& p : suite.prompts) lines += to_json(p).dump() + "\n";
  write_file(dir / "eval.jsonl", lines);
  RunConfig cfg = synthetic_run_config(suite);
  cfg.store_path = "store.jsonl";
  cfg.eval_set_path = "eval.jsonl";
  cfg.out_dir = "out";
  write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
  cfg.arms = {{"random", Strategy::random}, {"bm25", Strategy::bm25}, {"dense", Strategy::dense}};
  cfg.out_dir = "out-compare";
  write_file(dir / "compare.json", to_json(cfg).dump(2) + "\n");
  std::cout << "wrote " << suite.store.size() << " demonstrations and " << suite.prompts.size()
            << " scenarios to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented secure code generation experiments"};
  app.set_version_flag("--version", SECCODER_VERSION);
  app.require_subcommand(1);

  std::string input, store_arg, entry;
  std::optional<long long> budget;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate records and write a store");
  ingest_cmd->add_option("--input", input, "Records to ingest (JSONL)")->required();
  ingest_cmd->add_option("--store", store_arg, "Store file to write")->required();
  ingest_cmd->add_option("--budget", budget, "Drop entries above this many tokens");

  auto* expand_cmd = app.add_subcommand("expand", "Append one entry to a store file");
  expand_cmd->add_option("--store", store_arg, "Store file")->required();
  expand_cmd->add_option("--entry", entry, "File holding one JSONL record")->required();
  expand_cmd->add_option("--budget", budget, "Reject entries above this many tokens");

  Common common;
  std::string strategy = "dense";
  std::size_t k = 1;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank demonstrations for each scenario");
  add_common(retrieve_cmd, common);
  retrieve_cmd->add_option("--strategy", strategy, "dense | bm25 | random");
  retrieve_cmd->add_option("--k", k, "Results per scenario");

  auto* generate_cmd = app.add_subcommand("generate", "Sample completions for every arm, run and scenario");
  add_common(generate_cmd, common);

  std::string samples_path;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score generated completions");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--samples", samples_path, "Output of generate (default <out>/generated.jsonl)");

  auto* run_cmd = app.add_subcommand("run", "Generate, evaluate and report with a manifest");
  add_common(run_cmd, common);

  auto* compare_cmd = app.add_subcommand("compare", "Security rate and retrieval quality per strategy");
  add_common(compare_cmd, common);

  std::string synth_out = "synthetic";
  std::size_t synth_prompts = 20, synth_demos = 5;
  std::uint64_t synth_seed = 7;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic benchmark and a matching config");
  synth_cmd->add_option("--out", synth_out, "Directory to write");
  synth_cmd->add_option("--prompts", synth_prompts, "Number of scenarios");
  synth_cmd->add_option("--demos-per-cwe", synth_demos, "Demonstrations per CWE");
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return cmd_ingest(input, store_arg, budget);
    if (*expand_cmd) {
      std::optional<std::size_t> b;
      if (budget) {
        if (*budget < 0) throw ValidationError("budget must be >= 0");
        b = static_cast<std::size_t>(*budget);
      }
      std::cout << expand_store_file(store_arg, entry, b) << "\n";
      return 0;
    }
    if (*retrieve_cmd) return cmd_retrieve(common, strategy, k);
    if (*generate_cmd) return cmd_generate(common);
    if (*evaluate_cmd) return cmd_evaluate(common, samples_path);
    if (*run_cmd) return cmd_run(common);
    if (*compare_cmd) return cmd_compare(common);
    if (*synth_cmd) return cmd_synth(synth_out, synth_prompts, synth_demos, synth_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "seccoder/analytics.hpp"
#include "seccoder/demo_store.hpp"
#include "seccoder/evaluator.hpp"
#include "seccoder/lm_gateway.hpp"
#include "seccoder/retriever.hpp"

namespace seccoder {

using nlohmann::json;

struct EmbedderConfig {
  std::string kind = "hashed";  ///< hashed | http
  std::size_t dimension = 64;
  HttpEndpoint endpoint;
};

struct LmConfig {
  std::string kind = "mock";  ///< mock | http
  MockLmConfig mock;
  HttpEndpoint endpoint;
  bool server_side_n = false;
};

struct AnalyzerConfig {
  std::string kind = "mock";  ///< mock | sarif
  std::map<std::string, std::vector<std::string>> mock_patterns{
      {"CWE-022", {"os.path.join(base +"}}};
  std::string command;  ///< sarif only
  std::optional<std::map<std::string, std::vector<std::string>>> query_table;
  bool any_finding_counts = false;
};

struct ValidityConfig {
  std::string kind = "mock";  ///< mock | compiler
  std::string python = "python3";
  std::string cxx = "c++";
  std::string invalid_marker = "<<syntax-error>>";
};

struct FunctionalConfig {
  std::string command;  ///< empty disables pass@k
  std::vector<std::size_t> ks{1, 5, 10};
};

struct ArmConfig {
  std::string label;
  std::optional<Strategy> strategy;  ///< none = no demonstration
};

struct RunConfig {
  std::filesystem::path store_path;
  std::filesystem::path eval_set_path;
  RetrieverConfig retriever;
  EmbedderConfig embedder;
  SamplingConfig sampling;
  LmConfig lm;
  AnalyzerConfig analyzer;
  ValidityConfig validity;
  FunctionalConfig functional;
  std::vector<ArmConfig> arms{{"none", std::nullopt}, {"dense", Strategy::dense}};
  std::size_t runs = 3;
  std::vector<std::uint64_t> seeds{0, 1000000, 2000000};
  std::vector<std::string> exclude_cwes;
  std::optional<std::size_t> context_budget;
  std::size_t top_k = 1;
  std::size_t workers = 4;
  double error_budget = 0.10;
  std::filesystem::path out_dir = "out";

  void validate() const;
};

json to_json(const RunConfig& cfg);
/// Paths in the file are resolved against `base_dir` when relative.
RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir = {});
/// Accepts a config file or a manifest (its embedded config is used).
RunConfig load_run_config(const std::filesystem::path& path);

/// Concrete services behind one run.
struct Backends {
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<CompletionBackend> lm;
  std::shared_ptr<SyntaxChecker> checker;
  std::shared_ptr<SecurityAnalyzer> analyzer;
  CweQueryTable query_table;
  std::shared_ptr<FunctionalRunner> functional;
};

Backends make_backends(const RunConfig& cfg);

std::vector<PromptCase> load_prompts(const std::filesystem::path& path);
std::vector<PromptCase> parse_prompts(std::string_view jsonl);
json to_json(const PromptCase& p);

/// One (arm, run, prompt) cell of the experiment after generation.
struct PromptRecord {
  std::string arm;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string prompt_id;
  std::string scenario_id;
  std::optional<std::string> cwe;
  std::optional<std::string> demo_id;
  std::optional<double> retrieval_score;
  std::string prompt_hash;
  std::vector<CompletionSample> samples;
  std::optional<std::string> error;
};

struct EvaluatedRecord {
  PromptRecord record;
  std::vector<SampleVerdict> verdicts;
  ScenarioResult result;
  std::vector<std::string> warnings;
};

struct RetrievalQuality {
  double accuracy_at_1 = 0.0;
  std::optional<double> avg_min_rank;
  std::size_t excluded = 0;
};

struct ArmReport {
  std::string label;
  std::optional<Strategy> strategy;
  EvaluationReport report;
  std::optional<RetrievalQuality> retrieval_quality;
};

struct PipelineResult {
  std::vector<ArmReport> arms;
  std::vector<EvaluatedRecord> records;
  json manifest;
  std::size_t total_cells = 0;
  std::size_t errored_cells = 0;
  bool over_error_budget = false;
};

/// Retrieval, integration and sampling for one arm over every prompt and run.
std::vector<PromptRecord> generate_arm(const RunConfig& cfg, const ArmConfig& arm,
                                       const DemoStore& store,
                                       const std::vector<PromptCase>& prompts, Backends& backends);

/// Dedupe, validity and security for generated records.
std::vector<EvaluatedRecord> evaluate_records(const RunConfig& cfg,
                                              const std::vector<PromptRecord>& records,
                                              const std::vector<PromptCase>& prompts,
                                              Backends& backends);

/// Folds evaluated records of one arm into its report (runs in config order).
EvaluationReport report_for_arm(const RunConfig& cfg, const std::string& arm,
                                const std::vector<EvaluatedRecord>& records);

/// Full-ranking audits of every prompt against one retriever. `seed` salts
/// the random strategy the same way the first run does.
RetrievalQuality retrieval_quality(const Retriever& retriever,
                                   const std::vector<PromptCase>& prompts, std::uint64_t seed);

/// Whole experiment. Loads store and evaluation set from cfg paths.
PipelineResult run_pipeline(const RunConfig& cfg);
PipelineResult run_pipeline(const RunConfig& cfg, const DemoStore& store,
                            const std::vector<PromptCase>& prompts, Backends& backends);

/// Writes manifest.json, samples.jsonl, report.json and report.txt into cfg.out_dir.
void write_outputs(const RunConfig& cfg, const PipelineResult& result);

/// Rebuilds per-arm reports from manifest records alone.
std::vector<std::pair<std::string, EvaluationReport>> reports_from_manifest(const json& manifest);

json to_json(const EvaluationReport& report);
json to_json(const CompletionSample& s);
CompletionSample sample_from_json(const json& j);
json to_json(const PromptRecord& r);
PromptRecord prompt_record_from_json(const json& j);
std::string format_report_table(const std::vector<ArmReport>& arms);

struct ComparisonRow {
  std::string label;
  Strategy strategy = Strategy::dense;
  std::optional<double> security_rate;
  RetrievalQuality quality;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::string text() const;
  json to_json() const;
};

/// Security rate and retrieval quality per retrieval strategy arm.
ComparisonTable compare_retrievers(const RunConfig& cfg);
ComparisonTable compare_retrievers(const RunConfig& cfg, const PipelineResult& result);

/// Appends an entry file's record to the store file. Returns the new size.
std::size_t expand_store_file(const std::filesystem::path& store_path,
                              const std::filesystem::path& entry_path,
                              std::optional<std::size_t> budget = std::nullopt);

}  // namespace seccoder

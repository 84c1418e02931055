#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seccoder/common.hpp"
#include "seccoder/demo_store.hpp"
#include "seccoder/embedding.hpp"

namespace seccoder {

enum class Strategy { dense, bm25, random };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

inline constexpr char kDefaultPromptInstruction[] =
    "Represent the code comment for retrieving supporting secure code examples:";
inline constexpr char kDefaultDocumentInstruction[] =
    "Represent the secure code example for retrieval:";

struct RetrieverConfig {
  Strategy strategy = Strategy::dense;
  std::string prompt_instruction = kDefaultPromptInstruction;
  std::string document_instruction = kDefaultDocumentInstruction;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RetrievalResult {
  std::string entry_id;
  double score = 0.0;
  std::size_t rank = 1;  ///< 1 = best
  std::size_t index = 0; ///< insertion index in the store

  bool operator==(const RetrievalResult&) const = default;
};

/// Text embedded for a prompt: description, newline, code prefix.
std::string render_for_retrieval(const PromptCase& prompt);

/// Adjacent scores closer than this are ties, broken by insertion index.
inline constexpr double kTieTolerance = 1e-12;

/// Sorts (score desc, index asc) and keeps the best min(k, n).
std::vector<RetrievalResult> rank_scores(const DemoStore& store, const std::vector<double>& scores,
                                         std::size_t k);

/// Exhaustive cosine scan over the store.
std::vector<RetrievalResult> retrieve_dense(const PromptCase& prompt, const DemoStore& store,
                                            std::size_t k, Embedder& embedder,
                                            const RetrieverConfig& cfg = {});

/// Document statistics for Okapi BM25 over tokenize_code of each entry.
class Bm25Index {
 public:
  explicit Bm25Index(const DemoStore& store);

  std::size_t num_docs() const noexcept { return doc_len_.size(); }
  double avgdl() const noexcept { return avgdl_; }
  std::size_t doc_length(std::size_t doc) const { return doc_len_.at(doc); }
  std::size_t doc_freq(const std::string& term) const;
  std::size_t term_freq(std::size_t doc, const std::string& term) const;

  /// ln((N - df + 0.5) / (df + 0.5) + 1)
  double idf(const std::string& term) const;

  /// Score of every document, summing over query tokens with multiplicity.
  std::vector<double> score_all(const std::vector<std::string>& query_tokens, double k1,
                                double b) const;

  const DemoStore& store() const noexcept { return *store_; }

 private:
  std::shared_ptr<const DemoStore> store_;
  std::vector<std::unordered_map<std::string, std::size_t>> tf_;
  std::vector<std::size_t> doc_len_;
  std::unordered_map<std::string, std::size_t> df_;
  double avgdl_ = 0.0;
};

Bm25Index build_bm25_index(const DemoStore& store);

std::vector<RetrievalResult> retrieve_bm25(const PromptCase& prompt, const Bm25Index& index,
                                           std::size_t k, const RetrieverConfig& cfg = {});

/// Uniform sample without replacement; scores are 0 and ranks follow draw order.
std::vector<RetrievalResult> retrieve_random(const DemoStore& store, std::size_t k,
                                             std::uint64_t seed);

/// Facade choosing the configured strategy. Holds the BM25 index and the
/// embedding cache for one store.
class Retriever {
 public:
  Retriever(DemoStore store, RetrieverConfig cfg, std::shared_ptr<Embedder> embedder);

  /// `salt` perturbs the random strategy's seed (per prompt and run).
  std::vector<RetrievalResult> retrieve(const PromptCase& prompt, std::size_t k,
                                        std::uint64_t salt = 0) const;

  const DemoStore& store() const noexcept { return store_; }
  const RetrieverConfig& config() const noexcept { return cfg_; }

 private:
  DemoStore store_;
  RetrieverConfig cfg_;
  std::shared_ptr<Embedder> embedder_;
  std::optional<Bm25Index> bm25_;
};

}  // namespace seccoder

#include "seccoder/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "seccoder/error.hpp"
#include "seccoder/hash.hpp"
#include "seccoder/tokenize.hpp"

namespace seccoder {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::dense:
      return "dense";
    case Strategy::bm25:
      return "bm25";
    case Strategy::random:
      return "random";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "dense") return Strategy::dense;
  if (name == "bm25") return Strategy::bm25;
  if (name == "random") return Strategy::random;
  throw ValidationError("unknown retrieval strategy \"" + std::string(name) + "\"");
}

void RetrieverConfig::validate() const {
  if (!(bm25_k1 >= 0)) throw ValidationError("bm25_k1 must be >= 0");
  if (!(bm25_b >= 0 && bm25_b <= 1)) throw ValidationError("bm25_b must lie in [0, 1]");
}

std::string render_for_retrieval(const PromptCase& prompt) {
  return prompt.description + "\n" + prompt.code_prefix;
}

namespace {

void require_nonempty(const DemoStore& store) {
  if (store.empty()) throw ValidationError("empty demonstration store");
}

void require_k(std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
}

}  // namespace

std::vector<RetrievalResult> rank_scores(const DemoStore& store, const std::vector<double>& scores,
                                         std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Runs of scores within kTieTolerance of their neighbour are one tie group,
  // ordered by insertion index.
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo + 1;
    while (hi < order.size() && scores[order[hi - 1]] - scores[order[hi]] <= kTieTolerance) ++hi;
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(lo),
              order.begin() + static_cast<std::ptrdiff_t>(hi));
    lo = hi;
  }
  const std::size_t n = std::min(k, order.size());
  std::vector<RetrievalResult> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    out.push_back({store[i].id, scores[i], r + 1, i});
  }
  return out;
}

std::vector<RetrievalResult> retrieve_dense(const PromptCase& prompt, const DemoStore& store,
                                            std::size_t k, Embedder& embedder,
                                            const RetrieverConfig& cfg) {
  require_nonempty(store);
  require_k(k);
  const EmbeddingVector query = embedder.embed(render_for_retrieval(prompt), cfg.prompt_instruction);
  std::vector<std::string> docs;
  docs.reserve(store.size());
  for (const auto& e : store.entries()) docs.push_back(e.code);
  const auto doc_vecs = embedder.embed_batch(docs, cfg.document_instruction);
  if (doc_vecs.size() != docs.size()) throw ProtocolError("embedder dropped documents");

  std::vector<double> scores(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) scores[i] = cosine_similarity(query, doc_vecs[i]);
  return rank_scores(store, scores, k);
}

Bm25Index::Bm25Index(const DemoStore& store) : store_(std::make_shared<const DemoStore>(store)) {
  require_nonempty(store);
  tf_.reserve(store.size());
  std::size_t total = 0;
  for (const auto& e : store.entries()) {
    std::unordered_map<std::string, std::size_t> tf;
    const auto toks = tokenize_code(e.code);
    for (const auto& t : toks) ++tf[t];
    for (const auto& [term, _] : tf) ++df_[term];
    doc_len_.push_back(toks.size());
    total += toks.size();
    tf_.push_back(std::move(tf));
  }
  avgdl_ = static_cast<double>(total) / static_cast<double>(store.size());
}

std::size_t Bm25Index::doc_freq(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

std::size_t Bm25Index::term_freq(std::size_t doc, const std::string& term) const {
  const auto& tf = tf_.at(doc);
  auto it = tf.find(term);
  return it == tf.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
  const double n = static_cast<double>(num_docs());
  const double df = static_cast<double>(doc_freq(term));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<double> Bm25Index::score_all(const std::vector<std::string>& query_tokens, double k1,
                                         double b) const {
  std::vector<double> scores(num_docs(), 0.0);
  // An all-empty corpus has avgdl 0; length normalization is then moot.
  const double avgdl = avgdl_ > 0 ? avgdl_ : 1.0;
  for (const auto& term : query_tokens) {
    if (doc_freq(term) == 0) continue;
    const double w = idf(term);
    for (std::size_t d = 0; d < num_docs(); ++d) {
      const double f = static_cast<double>(term_freq(d, term));
      if (f == 0) continue;
      const double norm = k1 * (1.0 - b + b * static_cast<double>(doc_len_[d]) / avgdl);
      scores[d] += w * f * (k1 + 1.0) / (f + norm);
    }
  }
  return scores;
}

Bm25Index build_bm25_index(const DemoStore& store) { return Bm25Index(store); }

std::vector<RetrievalResult> retrieve_bm25(const PromptCase& prompt, const Bm25Index& index,
                                           std::size_t k, const RetrieverConfig& cfg) {
  require_k(k);
  cfg.validate();
  const auto scores =
      index.score_all(tokenize_code(render_for_retrieval(prompt)), cfg.bm25_k1, cfg.bm25_b);
  return rank_scores(index.store(), scores, k);
}

namespace {

// Unbiased integer in [0, bound) by rejection.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

std::vector<RetrievalResult> retrieve_random(const DemoStore& store, std::size_t k,
                                             std::uint64_t seed) {
  require_nonempty(store);
  require_k(k);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(store.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(k, idx.size());
  std::vector<RetrievalResult> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t j = r + static_cast<std::size_t>(bounded(rng, idx.size() - r));
    std::swap(idx[r], idx[j]);
    out.push_back({store[idx[r]].id, 0.0, r + 1, idx[r]});
  }
  return out;
}

Retriever::Retriever(DemoStore store, RetrieverConfig cfg, std::shared_ptr<Embedder> embedder)
    : store_(std::move(store)), cfg_(std::move(cfg)), embedder_(std::move(embedder)) {
  cfg_.validate();
  require_nonempty(store_);
  if (cfg_.strategy == Strategy::dense && !embedder_) {
    throw ValidationError("dense retrieval needs an embedder");
  }
  if (cfg_.strategy == Strategy::bm25) bm25_.emplace(store_);
}

std::vector<RetrievalResult> Retriever::retrieve(const PromptCase& prompt, std::size_t k,
                                                 std::uint64_t salt) const {
  switch (cfg_.strategy) {
    case Strategy::dense:
      return retrieve_dense(prompt, store_, k, *embedder_, cfg_);
    case Strategy::bm25:
      return retrieve_bm25(prompt, *bm25_, k, cfg_);
    case Strategy::random:
      return retrieve_random(store_, k, splitmix64(cfg_.seed ^ splitmix64(salt)));
  }
  throw ValidationError("unknown strategy");
}

}  // namespace seccoder

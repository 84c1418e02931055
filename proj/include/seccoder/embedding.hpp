#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seccoder/error.hpp"

namespace seccoder {

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using EmbeddingVector = Embedding<double>;

/// dot(a, b) / (|a| |b|). Rejects mismatched dimensions and zero vectors.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  static_assert(std::is_same_v<typename DerivedA::Scalar, typename DerivedB::Scalar>);
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw ValidationError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) {
    throw ValidationError("cosine_similarity: zero vector has no direction");
  }
  Scalar s = a.dot(b) / (na * nb);
  // Rounding can push colinear inputs a hair outside [-1, 1].
  return std::clamp(s, Scalar(-1), Scalar(1));
}

/// Instruction-conditioned text encoder.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                                   const std::string& instruction) = 0;
  EmbeddingVector embed(const std::string& text, const std::string& instruction);
};

/// Offline test encoder: each token of tokenize_code is hashed (FNV-1a 64)
/// into one of `dimension` buckets, counts are accumulated and the vector is
/// L2-normalized. The instruction is ignored.
class HashedBagEmbedder final : public Embedder {
 public:
  explicit HashedBagEmbedder(std::size_t dimension = 64);
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                           const std::string& instruction) override;
  std::size_t dimension() const noexcept { return dimension_; }

  static std::size_t bucket(const std::string& token, std::size_t dimension);

 private:
  std::size_t dimension_;
};

struct HttpEndpoint {
  std::string url;                  ///< e.g. http://127.0.0.1:8080/embed
  std::string token_env;            ///< env var holding a bearer token; empty for none
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
};

/// POST {texts, instruction} -> {vectors}.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpEndpoint endpoint);
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                           const std::string& instruction) override;

 private:
  HttpEndpoint endpoint_;
};

/// Session cache keyed by (instruction, exact text). Pins the session
/// dimension on first use; later vectors of another length are a ProtocolError.
/// Safe for concurrent callers.
class CachingEmbedder final : public Embedder {
 public:
  explicit CachingEmbedder(std::shared_ptr<Embedder> inner);
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                           const std::string& instruction) override;

  std::size_t hits() const;
  std::size_t misses() const;
  std::optional<Eigen::Index> dimension() const;

 private:
  std::shared_ptr<Embedder> inner_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, EmbeddingVector> cache_;
  std::optional<Eigen::Index> dimension_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace seccoder

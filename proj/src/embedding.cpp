#include "seccoder/embedding.hpp"

#include <cmath>

#include "json.hpp"
#include "seccoder/hash.hpp"
#include "seccoder/http_util.hpp"
#include "seccoder/tokenize.hpp"

namespace seccoder {

using nlohmann::json;

EmbeddingVector Embedder::embed(const std::string& text, const std::string& instruction) {
  auto v = embed_batch({text}, instruction);
  if (v.size() != 1) throw ProtocolError("embedder returned " + std::to_string(v.size()) +
                                         " vectors for 1 text");
  return std::move(v.front());
}

namespace {

void require_texts(const std::vector<std::string>& texts) {
  for (const auto& t : texts) {
    if (t.empty()) throw ValidationError("cannot embed empty text");
  }
}

}  // namespace

HashedBagEmbedder::HashedBagEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw ValidationError("embedding dimension must be positive");
}

std::size_t HashedBagEmbedder::bucket(const std::string& token, std::size_t dimension) {
  return static_cast<std::size_t>(fnv1a64(token) % dimension);
}

std::vector<EmbeddingVector> HashedBagEmbedder::embed_batch(const std::vector<std::string>& texts,
                                                            const std::string&) {
  require_texts(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    EmbeddingVector v = EmbeddingVector::Zero(static_cast<Eigen::Index>(dimension_));
    for (const auto& tok : tokenize_code(text)) {
      v[static_cast<Eigen::Index>(bucket(tok, dimension_))] += 1.0;
    }
    const double n = v.norm();
    if (n > 0) v /= n;
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(const std::vector<std::string>& texts,
                                                       const std::string& instruction) {
  require_texts(texts);
  HttpReply reply = post_json(endpoint_, json{{"texts", texts}, {"instruction", instruction}});
  if (reply.status >= 500) {
    throw TransportError("embedding endpoint returned HTTP " + std::to_string(reply.status));
  }
  if (reply.status != 200) {
    throw ProtocolError("embedding endpoint returned HTTP " + std::to_string(reply.status) +
                        ": " + reply.body);
  }
  json body;
  try {
    body = json::parse(reply.body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("embedding reply is not JSON: ") + e.what());
  }
  if (!body.contains("vectors") || !body["vectors"].is_array()) {
    throw ProtocolError("embedding reply lacks a \"vectors\" array");
  }
  const auto& vecs = body["vectors"];
  if (vecs.size() != texts.size()) {
    throw ProtocolError("embedding reply has " + std::to_string(vecs.size()) + " vectors for " +
                        std::to_string(texts.size()) + " texts");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(vecs.size());
  std::optional<std::size_t> dim;
  for (const auto& jv : vecs) {
    if (!jv.is_array() || jv.empty()) throw ProtocolError("embedding vector must be a non-empty array");
    if (dim && jv.size() != *dim) throw ProtocolError("embedding vectors differ in dimension");
    dim = jv.size();
    EmbeddingVector v(static_cast<Eigen::Index>(jv.size()));
    for (std::size_t i = 0; i < jv.size(); ++i) {
      if (!jv[i].is_number()) throw ProtocolError("embedding component is not a number");
      const double x = jv[i].get<double>();
      if (!std::isfinite(x)) throw ProtocolError("embedding component is not finite");
      v[static_cast<Eigen::Index>(i)] = x;
    }
    out.push_back(std::move(v));
  }
  return out;
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<Embedder> inner) : inner_(std::move(inner)) {
  if (!inner_) throw ValidationError("CachingEmbedder needs an inner embedder");
}

std::vector<EmbeddingVector> CachingEmbedder::embed_batch(const std::vector<std::string>& texts,
                                                          const std::string& instruction) {
  require_texts(texts);
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_pos;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto it = cache_.find({instruction, texts[i]});
      if (it != cache_.end()) {
        out[i] = it->second;
        ++hits_;
      } else {
        missing.push_back(texts[i]);
        missing_pos.push_back(i);
      }
    }
  }
  if (missing.empty()) return out;

  // The inner call runs unlocked; concurrent misses on the same key both
  // compute, and the later insert wins with an identical value.
  auto fresh = inner_->embed_batch(missing, instruction);
  if (fresh.size() != missing.size()) {
    throw ProtocolError("embedder returned " + std::to_string(fresh.size()) + " vectors for " +
                        std::to_string(missing.size()) + " texts");
  }
  std::lock_guard lock(mu_);
  for (std::size_t j = 0; j < fresh.size(); ++j) {
    if (!dimension_) dimension_ = fresh[j].size();
    if (fresh[j].size() != *dimension_) {
      throw ProtocolError("embedding dimension " + std::to_string(fresh[j].size()) +
                          " does not match session dimension " + std::to_string(*dimension_));
    }
    cache_[{instruction, missing[j]}] = fresh[j];
    out[missing_pos[j]] = std::move(fresh[j]);
    ++misses_;
  }
  return out;
}

std::size_t CachingEmbedder::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t CachingEmbedder::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

std::optional<Eigen::Index> CachingEmbedder::dimension() const {
  std::lock_guard lock(mu_);
  return dimension_;
}

}  // namespace seccoder

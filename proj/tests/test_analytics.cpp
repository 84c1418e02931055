#include <algorithm>
#include <random>

#include "corpora.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "seccoder/analytics.hpp"
#include "seccoder/error.hpp"
#include "seccoder/retriever.hpp"

using namespace seccoder;

namespace {

RetrievalAudit audit(std::optional<std::string> cwe, std::vector<std::optional<std::string>> tags) {
  RetrievalAudit a;
  a.prompt_id = "p";
  a.prompt_cwe = std::move(cwe);
  for (std::size_t i = 0; i < tags.size(); ++i) a.ranking.push_back({"e" + std::to_string(i), tags[i]});
  a.first_match_rank = min_matching_rank(a);
  return a;
}

const std::optional<std::string> X = "CWE-022";
const std::optional<std::string> Y = "CWE-089";

std::vector<RetrievalAudit> random_audits(std::mt19937_64& rng) {
  static const char* cwes[] = {"CWE-022", "CWE-078", "CWE-089", "CWE-079"};
  std::vector<RetrievalAudit> out;
  const std::size_t n = 1 + rng() % 30;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::optional<std::string>> tags;
    for (std::size_t r = 1 + rng() % 15; r > 0; --r) {
      if (rng() % 10 == 0) {
        tags.push_back(std::nullopt);
      } else {
        tags.push_back(std::string(cwes[rng() % 4]));
      }
    }
    out.push_back(audit(std::string(cwes[rng() % 3]), tags));
  }
  return out;
}

}  // namespace

TEST_CASE("min matching rank examples") {
  CHECK(min_matching_rank(audit(X, {X, Y})) == 1u);
  CHECK(min_matching_rank(audit(X, {Y, Y, Y, X, Y, Y, X})) == 4u);
  CHECK_FALSE(min_matching_rank(audit(X, {Y, Y})));
  CHECK_FALSE(min_matching_rank(audit(std::nullopt, {X})));
}

TEST_CASE("avg min rank examples") {
  CHECK(avg_min_rank({audit(X, {X}), audit(X, {X}), audit(X, {X})}).average == 1.00);
  CHECK(avg_min_rank({audit(X, {Y, X}), audit(X, {Y, Y, Y, X})}).average == 3.00);
  const auto s = avg_min_rank({audit(X, {Y, X}), audit(X, {Y, Y})});
  CHECK(s.average == 2.0);
  CHECK(s.counted == 1);
  CHECK(s.excluded == 1);
  CHECK_THROWS_WITH_AS(avg_min_rank({audit(X, {Y})}), "no CWE-matching demonstrations exist",
                       ValidationError);
}

TEST_CASE("retrieval accuracy examples") {
  CHECK(retrieval_accuracy({audit(X, {X, Y}), audit(Y, {Y})}) == 100.00);
  CHECK(retrieval_accuracy({audit(X, {Y}), audit(Y, {X})}) == 0.00);
  CHECK(retrieval_accuracy({audit(X, {X, Y, X})}, 3) == 66.67);
  CHECK(retrieval_accuracy({audit(X, {X})}, 5) == 100.0);
  CHECK_THROWS_AS(retrieval_accuracy({}), ValidationError);
}

TEST_CASE("metrics match a brute-force recount on random audit sets") {
  std::mt19937_64 rng(606);
  for (int t = 0; t < 100; ++t) {
    auto audits = random_audits(rng);
    const std::size_t k = 1 + rng() % 5;
    std::size_t pairs = 0, hits = 0, sum = 0, counted = 0;
    for (const auto& a : audits) {
      std::vector<std::string> tags;
      for (const auto& r : a.ranking) tags.push_back(r.cwe_tag.value_or(""));
      for (std::size_t r = 0; r < std::min(k, tags.size()); ++r) {
        ++pairs;
        hits += tags[r] == *a.prompt_cwe;
      }
      if (auto m = oracle::first_match(tags, *a.prompt_cwe)) {
        sum += *m;
        ++counted;
        CHECK(a.first_match_rank == m);
      }
    }
    CHECK(retrieval_accuracy(audits, k) ==
          std::round(10000.0 * static_cast<double>(hits) / static_cast<double>(pairs)) / 100.0);
    if (counted) {
      const auto s = avg_min_rank(audits);
      CHECK(s.average == std::round(100.0 * static_cast<double>(sum) / static_cast<double>(counted)) / 100.0);
      CHECK(s.average >= 1.0);
      CHECK((retrieval_accuracy(audits, 1) == 100.0) == (s.average == 1.0 && s.excluded == 0));
      std::shuffle(audits.begin(), audits.end(), rng);
      CHECK(avg_min_rank(audits).average == s.average);
    }
    CHECK(retrieval_accuracy(audits, k) ==
          std::round(10000.0 * static_cast<double>(hits) / static_cast<double>(pairs)) / 100.0);
  }
}

TEST_CASE("dense beats sparse on the constructed corpus") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto c = corpora::dense_beats_sparse(seed);
    HashedBagEmbedder e;
    const auto idx = build_bm25_index(c.store);
    std::vector<RetrievalAudit> dense, sparse;
    std::size_t dense_sum = 0, sparse_sum = 0;
    std::vector<std::vector<std::string>> toks;
    std::vector<std::vector<double>> vecs;
    for (const auto& s : c.store.entries()) {
      toks.push_back(tokenize_code(s.code));
      vecs.push_back(oracle::hashed_bag(s.code));
    }
    for (const auto& p : c.prompts) {
      dense.push_back(make_audit(p, c.store, retrieve_dense(p, c.store, c.store.size(), e)));
      sparse.push_back(make_audit(p, c.store, retrieve_bm25(p, idx, c.store.size())));

      const auto q = oracle::hashed_bag(render_for_retrieval(p));
      std::vector<double> cos;
      for (const auto& v : vecs) cos.push_back(oracle::cosine(q, v));
      const auto bm = oracle::bm25(toks, tokenize_code(render_for_retrieval(p)));
      auto tags_of = [&](const std::vector<std::size_t>& order) {
        std::vector<std::string> t;
        for (auto i : order) t.push_back(*c.store[i].cwe_tag);
        return t;
      };
      dense_sum += *oracle::first_match(tags_of(oracle::sort_desc(cos)), *p.cwe());
      sparse_sum += *oracle::first_match(tags_of(oracle::sort_desc(bm)), *p.cwe());
    }
    const double n = static_cast<double>(c.prompts.size());
    const double d = avg_min_rank(dense).average;
    const double s = avg_min_rank(sparse).average;
    CHECK(d == std::round(100.0 * static_cast<double>(dense_sum) / n) / 100.0);
    CHECK(s == std::round(100.0 * static_cast<double>(sparse_sum) / n) / 100.0);
    CHECK(d < s);
  }
}

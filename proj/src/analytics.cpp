#include "seccoder/analytics.hpp"

#include "seccoder/error.hpp"
#include "seccoder/evaluator.hpp"

namespace seccoder {

RetrievalAudit make_audit(const PromptCase& prompt, const DemoStore& store,
                          const std::vector<RetrievalResult>& ranking) {
  RetrievalAudit a;
  a.prompt_id = prompt.id;
  if (auto c = prompt.cwe()) a.prompt_cwe = normalize_cwe(*c);
  a.ranking.reserve(ranking.size());
  for (const auto& r : ranking) {
    const SecureCodeEntry* e = store.find(r.entry_id);
    if (!e) throw ValidationError("ranked entry " + r.entry_id + " is not in the store");
    std::optional<std::string> tag;
    if (e->cwe_tag) tag = normalize_cwe(*e->cwe_tag);
    a.ranking.push_back({e->id, std::move(tag)});
  }
  a.first_match_rank = min_matching_rank(a);
  return a;
}

double retrieval_accuracy(const std::vector<RetrievalAudit>& audits, std::size_t at_k) {
  if (audits.empty()) throw ValidationError("retrieval_accuracy: no audits");
  if (at_k == 0) throw ValidationError("retrieval_accuracy: at_k must be >= 1");
  std::size_t pairs = 0;
  std::size_t hits = 0;
  for (const auto& a : audits) {
    const std::size_t n = std::min(at_k, a.ranking.size());
    for (std::size_t r = 0; r < n; ++r) {
      ++pairs;
      if (a.prompt_cwe && a.ranking[r].cwe_tag == a.prompt_cwe) ++hits;
    }
  }
  if (pairs == 0) throw ValidationError("retrieval_accuracy: audits have empty rankings");
  return round2(100.0 * static_cast<double>(hits) / static_cast<double>(pairs));
}

std::optional<std::size_t> min_matching_rank(const RetrievalAudit& audit) {
  if (!audit.prompt_cwe) return std::nullopt;
  for (std::size_t r = 0; r < audit.ranking.size(); ++r) {
    if (audit.ranking[r].cwe_tag == audit.prompt_cwe) return r + 1;
  }
  return std::nullopt;
}

MinRankSummary avg_min_rank(const std::vector<RetrievalAudit>& audits) {
  MinRankSummary s;
  std::size_t sum = 0;
  for (const auto& a : audits) {
    if (auto r = min_matching_rank(a)) {
      sum += *r;
      ++s.counted;
    } else {
      ++s.excluded;
    }
  }
  if (s.counted == 0) throw ValidationError("no CWE-matching demonstrations exist");
  s.average = round2(static_cast<double>(sum) / static_cast<double>(s.counted));
  return s;
}

}  // namespace seccoder

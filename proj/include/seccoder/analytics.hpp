#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "seccoder/retriever.hpp"

namespace seccoder {

struct RankedTag {
  std::string entry_id;
  std::optional<std::string> cwe_tag;
};

/// Retrieved ranking of one prompt with the tags needed for CWE matching.
struct RetrievalAudit {
  std::string prompt_id;
  std::optional<std::string> prompt_cwe;
  std::vector<RankedTag> ranking;  ///< rank r at position r-1
  std::optional<std::size_t> first_match_rank;
};

/// Builds an audit and fills first_match_rank.
RetrievalAudit make_audit(const PromptCase& prompt, const DemoStore& store,
                          const std::vector<RetrievalResult>& ranking);

/// Share of (prompt, rank <= at_k) pairs whose demonstration CWE equals the
/// prompt CWE, in percent. Audits shorter than at_k contribute their full ranking.
double retrieval_accuracy(const std::vector<RetrievalAudit>& audits, std::size_t at_k = 1);

std::optional<std::size_t> min_matching_rank(const RetrievalAudit& audit);

struct MinRankSummary {
  double average = 0.0;        ///< 2 decimals
  std::size_t counted = 0;
  std::size_t excluded = 0;    ///< prompts without any matching entry
};

/// Mean of defined min ranks. Throws when none is defined.
MinRankSummary avg_min_rank(const std::vector<RetrievalAudit>& audits);

}  // namespace seccoder

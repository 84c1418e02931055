#pragma once

// Constructed corpora shared by the unit tests and the acceptance binary.

#include <random>
#include <set>
#include <string>
#include <vector>

#include "seccoder/demo_store.hpp"

namespace seccoder::corpora {

struct Corpus {
  DemoStore store;
  std::vector<PromptCase> prompts;
};

inline std::string random_word(std::mt19937_64& rng, std::set<std::string>& used) {
  for (;;) {
    std::string w;
    for (int i = 0; i < 7; ++i) w += static_cast<char>('a' + rng() % 26);
    if (used.insert(w).second) return w;
  }
}

/// Per group g: a matching entry "a b c" tagged with the group's CWE, a
/// one-word distractor "r" tagged with another CWE, and the query "a b c r".
/// Filler entries hold the a/b/c words of every group plus one unique word,
/// so those words carry almost no IDF and the rare "r" dominates BM25, while
/// cosine similarity still favours the three-word overlap.
inline Corpus dense_beats_sparse(std::uint64_t seed, std::size_t groups = 6,
                                 std::size_t fillers = 12) {
  static const char* cwes[] = {"CWE-022", "CWE-078", "CWE-089"};
  std::mt19937_64 rng(seed);
  std::set<std::string> used;
  std::vector<std::vector<std::string>> common(groups);
  std::vector<std::string> rare(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    for (int j = 0; j < 3; ++j) common[g].push_back(random_word(rng, used));
    rare[g] = random_word(rng, used);
  }
  std::vector<EntryRecord> recs;
  Corpus c;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::string cwe = cwes[g % 3];
    const std::string other = cwes[(g + 1) % 3];
    const std::string abc = common[g][0] + " " + common[g][1] + " " + common[g][2];
    recs.push_back({"match" + std::to_string(g), abc, "python", cwe});
    recs.push_back({"rare" + std::to_string(g), rare[g], "python", other});
    PromptCase p;
    p.id = "q" + std::to_string(g);
    p.description = "# " + abc + " " + rare[g];
    p.cwe_tag = cwe + " " + std::to_string(g) + "-py";
    c.prompts.push_back(std::move(p));
  }
  for (std::size_t f = 0; f < fillers; ++f) {
    std::string code = random_word(rng, used);
    for (const auto& ws : common) {
      for (const auto& w : ws) code += " " + w;
    }
    recs.push_back({"filler" + std::to_string(f), code, "python", std::string("CWE-079")});
  }
  c.store = ingest(recs);
  return c;
}

}  // namespace seccoder::corpora

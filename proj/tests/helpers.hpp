#pragma once

#include <string>
#include <vector>

#include "pathfid/pathfid.hpp"

namespace testing_support {

inline std::string data_path(const std::string& name) { return std::string(PATHFID_TEST_DATA) + "/" + name; }

inline std::vector<pathfid::QuestionInstance> hotpot_fixture() {
  return pathfid::load_hotpot(data_path("hotpot_fixture.json")).instances;
}

inline const pathfid::QuestionInstance& by_id(const std::vector<pathfid::QuestionInstance>& qs, const std::string& id) {
  for (const auto& q : qs)
    if (q.id == id) return q;
  throw std::runtime_error("no instance " + id);
}

// Word pool without marker-like or whitespace tokens.
inline std::string random_word(pathfid::Rng& rng) {
  static const std::vector<std::string> words{"alpha", "beta", "Gamma", "delta,", "(1945", "film)", "48,982",
                                              "St.",   "o'neil", "x",   "über",   "a-b",   "2010",   "Temple"};
  return words[rng.below(words.size())];
}

inline std::string random_phrase(pathfid::Rng& rng, int min_words = 1, int max_words = 4) {
  int n = min_words + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_words - min_words + 1)));
  pathfid::Tokens t;
  for (int i = 0; i < n; ++i) t.push_back(random_word(rng));
  return pathfid::join(t);
}

// Well-formed path for a schema: 1..8 hops, non-empty titles, ascending
// facts in 1..32, answer iff the schema has one.
inline pathfid::ReasoningPath random_path(pathfid::Rng& rng, pathfid::PathSchema schema) {
  pathfid::ReasoningPath p;
  int hops = 1 + static_cast<int>(rng.below(pathfid::kMaxHops));
  for (int k = 0; k < hops; ++k) {
    pathfid::Hop h;
    h.title = random_phrase(rng);
    if (pathfid::schema_has_facts(schema))
      for (int j = 1; j <= pathfid::kMaxFactMarkers; ++j)
        if (rng.uniform() < 0.15) h.facts.push_back(j);
    p.hops.push_back(h);
  }
  if (pathfid::schema_has_answer(schema)) p.answer = random_phrase(rng);
  return p;
}

}  // namespace testing_support

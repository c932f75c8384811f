#pragma once

#include <fstream>
#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathfid/corpus.hpp"
#include "pathfid/error.hpp"
#include "pathfid/pathcodec.hpp"
#include "pathfid/text.hpp"

namespace pathfid {

/// Outgoing hyperlinks keyed by exact title.
struct LinkGraph {
  std::map<std::string, std::set<std::string>> edges;

  bool links(const std::string& from, const std::string& to) const {
    auto it = edges.find(from);
    return it != edges.end() && it->second.count(to) > 0;
  }

  void add_passage_links(const Passage& p) {
    for (const auto& t : p.links) edges[p.title].insert(t);
  }

  static LinkGraph from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error("hoporder", "link graph must be a JSON object");
    LinkGraph g;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      if (!it.value().is_array()) throw Error("hoporder", "links of '" + it.key() + "' must be an array");
      auto& dst = g.edges[it.key()];
      for (const auto& t : it.value())
        if (t.is_string()) dst.insert(t.get<std::string>());
    }
    return g;
  }

  static LinkGraph load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("hoporder", "cannot open link graph '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error("hoporder", "malformed link graph '" + path + "': " + e.what());
    }
  }
};

inline bool passage_contains_answer(const Passage& p, std::string_view answer) {
  std::string needle = normalize_answer(answer);
  if (needle.empty()) return false;
  std::string text = p.title;
  for (const auto& s : p.sentences) text += " " + s;
  return normalize_answer(text).find(needle) != std::string::npos;
}

/// Orders two gold passages into a reasoning sequence. The passage holding
/// the answer goes last; when containment does not decide, a passage that
/// links to the other goes first; otherwise titles are ordered
/// lexicographically.
inline std::vector<Passage> order_hops(const std::vector<Passage>& gold, std::string_view answer,
                                       const LinkGraph& links = {}) {
  if (gold.size() != 2)
    throw Error("hoporder", "hop ordering needs exactly 2 gold passages, got " + std::to_string(gold.size()));
  if (trim(answer).empty()) throw Error("hoporder", "answer must be non-empty");
  const Passage& a = gold[0];
  const Passage& b = gold[1];
  bool a_has = passage_contains_answer(a, answer);
  bool b_has = passage_contains_answer(b, answer);
  if (a_has != b_has) return a_has ? std::vector<Passage>{b, a} : std::vector<Passage>{a, b};

  LinkGraph merged = links;
  merged.add_passage_links(a);
  merged.add_passage_links(b);
  bool a_to_b = merged.links(a.title, b.title);
  bool b_to_a = merged.links(b.title, a.title);
  if (a_to_b != b_to_a) return a_to_b ? std::vector<Passage>{a, b} : std::vector<Passage>{b, a};

  return a.title <= b.title ? std::vector<Passage>{a, b} : std::vector<Passage>{b, a};
}

/// Orders three or more passages along a hyperlink chain: exactly one
/// passage without incoming links, each passage linking to exactly one
/// unvisited successor. Returns nullopt when the links do not form a chain.
inline std::optional<std::vector<Passage>> link_chain(const std::vector<Passage>& gold, const LinkGraph& links = {}) {
  LinkGraph merged = links;
  for (const auto& p : gold) merged.add_passage_links(p);
  const std::size_t n = gold.size();
  std::vector<int> incoming(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && merged.links(gold[i].title, gold[j].title)) ++incoming[j];
  if (std::count(incoming.begin(), incoming.end(), 0) != 1) return std::nullopt;
  std::size_t cur = static_cast<std::size_t>(std::find(incoming.begin(), incoming.end(), 0) - incoming.begin());
  std::vector<bool> used(n, false);
  std::vector<Passage> out;
  while (true) {
    used[cur] = true;
    out.push_back(gold[cur]);
    if (out.size() == n) return out;
    std::optional<std::size_t> next;
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j] || !merged.links(gold[cur].title, gold[j].title)) continue;
      if (next) return std::nullopt;
      next = j;
    }
    if (!next) return std::nullopt;
    cur = *next;
  }
}

/// Gold reasoning path of an instance. Two gold passages are ordered with
/// order_hops; longer chains follow hyperlinks when they form a chain and
/// otherwise keep corpus order.
inline ReasoningPath gold_path(const QuestionInstance& q, const LinkGraph& links = {}) {
  std::vector<Passage> gold;
  for (const auto& p : q.passages)
    if (q.gold_passage_titles.count(p.title) &&
        std::none_of(gold.begin(), gold.end(), [&](const Passage& g) { return g.title == p.title; }))
      gold.push_back(p);
  if (gold.size() == 2 && !trim(q.answer).empty()) {
    gold = order_hops(gold, q.answer, links);
  } else if (gold.size() > 2) {
    if (auto chain = link_chain(gold, links)) gold = std::move(*chain);
  }

  ReasoningPath path;
  for (const auto& p : gold) {
    Hop h;
    h.title = p.title;
    for (const auto& sf : q.gold_supports)
      if (sf.title == p.title) h.facts.push_back(sf.sentence + 1);
    std::sort(h.facts.begin(), h.facts.end());
    path.hops.push_back(std::move(h));
  }
  path.answer = q.answer;
  return path;
}

}  // namespace pathfid

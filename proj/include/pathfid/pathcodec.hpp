#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "pathfid/error.hpp"
#include "pathfid/markers.hpp"
#include "pathfid/text.hpp"

namespace pathfid {

struct Hop {
  std::string title;
  std::vector<int> facts;  // 1-based, strictly ascending

  bool operator==(const Hop&) const = default;
};

struct ReasoningPath {
  std::vector<Hop> hops;
  std::optional<std::string> answer;

  bool operator==(const ReasoningPath&) const = default;
};

/// Target layouts: [t1-t2], [t1-t2-answer], [t1-f1-t2-f2-answer].
enum class PathSchema { titles_only, titles_answer, full };

inline std::string to_string(PathSchema s) {
  switch (s) {
    case PathSchema::titles_only: return "titles_only";
    case PathSchema::titles_answer: return "titles_answer";
    case PathSchema::full: return "full";
  }
  return "full";
}

inline PathSchema schema_from(std::string_view s) {
  if (s == "titles_only") return PathSchema::titles_only;
  if (s == "titles_answer") return PathSchema::titles_answer;
  if (s == "full") return PathSchema::full;
  throw Error("pathcodec", "unknown path schema '" + std::string(s) + "'");
}

inline bool schema_has_facts(PathSchema s) { return s == PathSchema::full; }
inline bool schema_has_answer(PathSchema s) { return s != PathSchema::titles_only; }

/// The part of `p` a schema can express.
inline ReasoningPath restrict_to(ReasoningPath p, PathSchema s) {
  if (!schema_has_facts(s))
    for (auto& h : p.hops) h.facts.clear();
  if (!schema_has_answer(s)) p.answer.reset();
  return p;
}

inline std::optional<std::string> validate_path(const ReasoningPath& p) {
  for (std::size_t k = 0; k < p.hops.size(); ++k) {
    const auto& h = p.hops[k];
    for (std::size_t i = 0; i < h.facts.size(); ++i) {
      if (h.facts[i] < 1) return "hop " + std::to_string(k + 1) + " has a fact index below 1";
      if (i > 0 && h.facts[i] <= h.facts[i - 1])
        return "hop " + std::to_string(k + 1) + " fact indices not strictly ascending";
    }
  }
  return std::nullopt;
}

/// `<title-1> t1 <facts-1> <f..> ... <answer> a`, with the facts and answer
/// segments present according to the schema.
inline Tokens linearize(const ReasoningPath& path, PathSchema schema) {
  if (auto err = validate_path(path)) throw Error("pathcodec", *err);
  if (static_cast<int>(path.hops.size()) > kMaxHops)
    throw Error("pathcodec", "path has more hops than title markers");
  if (schema_has_answer(schema) && !path.answer)
    throw Error("pathcodec", "schema " + to_string(schema) + " requires an answer");
  Tokens out;
  for (std::size_t k = 0; k < path.hops.size(); ++k) {
    const int hop = static_cast<int>(k) + 1;
    out.push_back(title_marker(hop));
    for (auto& t : split_whitespace(path.hops[k].title)) out.push_back(std::move(t));
    if (schema_has_facts(schema)) {
      out.push_back(facts_marker(hop));
      for (int j : path.hops[k].facts) {
        if (j > kMaxFactMarkers)
          throw Error("pathcodec", "fact index " + std::to_string(j) + " exceeds the marker inventory");
        out.push_back(fact_marker(j));
      }
    }
  }
  if (schema_has_answer(schema)) {
    out.emplace_back(kAnswerMarker);
    for (auto& t : split_whitespace(*path.answer)) out.push_back(std::move(t));
  }
  return out;
}

struct ParsedPath {
  ReasoningPath path;
  std::vector<std::string> diagnostics;
};

/// Total inverse of linearize over arbitrary decoder output. Never throws;
/// anything that does not fit the grammar is reported in `diagnostics`.
///
/// Recovery rules: the first <answer> splits off the answer; each
/// <title-k> opens a new hop in encounter order whatever k is; fact markers
/// outside a facts segment are dropped; repeated facts are deduplicated;
/// plain tokens inside a facts segment join the current title.
inline ParsedPath parse(const Tokens& tokens, PathSchema schema) {
  ParsedPath out;
  auto& diag = out.diagnostics;
  if (tokens.empty()) {
    diag.push_back("empty sequence");
    return out;
  }

  auto answer_at = std::find(tokens.begin(), tokens.end(), kAnswerMarker);
  if (answer_at != tokens.end()) {
    if (schema_has_answer(schema))
      out.path.answer = join(std::next(answer_at), tokens.end());
    else
      diag.push_back("answer segment ignored under schema " + to_string(schema));
  } else if (schema_has_answer(schema)) {
    diag.push_back("no answer marker");
  }

  enum class Segment { none, title, facts };
  Segment seg = Segment::none;
  std::vector<Tokens> titles;
  auto& hops = out.path.hops;

  for (auto it = tokens.begin(); it != answer_at; ++it) {
    const std::string& tok = *it;
    if (auto k = as_title_marker(tok)) {
      if (*k != static_cast<int>(hops.size()) + 1)
        diag.push_back("title marker " + tok + " opens hop " + std::to_string(hops.size() + 1));
      hops.emplace_back();
      titles.emplace_back();
      seg = Segment::title;
    } else if (auto k = as_facts_marker(tok)) {
      if (hops.empty()) {
        diag.push_back("facts marker " + tok + " before any title");
        seg = Segment::none;
        continue;
      }
      if (*k != static_cast<int>(hops.size()))
        diag.push_back("facts marker " + tok + " attached to hop " + std::to_string(hops.size()));
      seg = Segment::facts;
    } else if (auto j = as_fact_marker(tok)) {
      if (seg != Segment::facts) {
        diag.push_back("fact marker " + tok + " outside a facts segment ignored");
        continue;
      }
      if (*j > kMaxFactMarkers) {
        diag.push_back("fact marker " + tok + " beyond the marker inventory ignored");
        continue;
      }
      if (!schema_has_facts(schema)) {
        diag.push_back("fact marker " + tok + " ignored under schema " + to_string(schema));
        continue;
      }
      auto& facts = hops.back().facts;
      auto pos = std::lower_bound(facts.begin(), facts.end(), *j);
      if (pos != facts.end() && *pos == *j) {
        diag.push_back("duplicate fact marker " + tok + " in hop " + std::to_string(hops.size()));
        continue;
      }
      if (pos != facts.end()) diag.push_back("fact markers out of order in hop " + std::to_string(hops.size()));
      facts.insert(pos, *j);
    } else if (is_marker(tok) || tok == "<pad>" || tok == "<bos>" || tok == "<eos>" || tok == "<unk>") {
      diag.push_back("unexpected token " + tok + " ignored");
    } else {
      if (hops.empty()) {
        diag.push_back("token '" + tok + "' before the first title ignored");
        continue;
      }
      if (seg == Segment::facts)
        diag.push_back("token '" + tok + "' in facts segment joined to title " + std::to_string(hops.size()));
      titles.back().push_back(tok);
    }
  }

  for (std::size_t k = 0; k < hops.size(); ++k) {
    hops[k].title = join(titles[k]);
    if (hops[k].title.empty()) diag.push_back("hop " + std::to_string(k + 1) + " has an empty title");
  }
  if (hops.empty()) diag.push_back("no title segments");
  return out;
}

inline ParsedPath parse(std::string_view text, PathSchema schema) {
  return parse(split_whitespace(text), schema);
}

/// Cuts the reasoning path before the answer segment until the whole
/// sequence fits `max_len`. Structural markers left dangling at the end of
/// the cut region are dropped too.
inline Tokens truncate_target(const Tokens& tokens, int max_len) {
  if (static_cast<int>(tokens.size()) <= max_len) return tokens;
  auto answer_at = std::find(tokens.begin(), tokens.end(), kAnswerMarker);
  Tokens head(tokens.begin(), answer_at);
  Tokens tail(answer_at, tokens.end());
  if (static_cast<int>(tail.size()) > max_len)
    throw Error("pathcodec", "answer segment of " + std::to_string(tail.size()) +
                                 " tokens exceeds max target length " + std::to_string(max_len));
  head.resize(static_cast<std::size_t>(max_len) - tail.size());
  while (!head.empty() && (as_facts_marker(head.back()) || as_title_marker(head.back())))
    head.pop_back();
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

/// Token-level F1 between titles: lowercase whitespace tokens, punctuation
/// kept attached.
inline double title_f1(std::string_view a, std::string_view b) {
  auto ta = split_whitespace(to_lower(a));
  auto tb = split_whitespace(to_lower(b));
  if (ta.empty() || tb.empty()) return 0.0;
  return multiset_f1(ta, tb);
}

/// Snaps every hop title to the most similar candidate title (earliest
/// candidate wins ties).
inline ParsedPath reconstruct_titles(ReasoningPath path, const std::vector<std::string>& candidates) {
  ParsedPath out;
  if (candidates.empty()) {
    out.diagnostics.push_back("no candidate titles; titles left as generated");
    out.path = std::move(path);
    return out;
  }
  for (std::size_t k = 0; k < path.hops.size(); ++k) {
    auto& h = path.hops[k];
    std::size_t best = 0;
    double best_f1 = -1.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double f = candidates[c] == h.title ? 2.0 : title_f1(h.title, candidates[c]);
      if (f > best_f1) {
        best_f1 = f;
        best = c;
      }
    }
    if (best_f1 <= 0.0)
      out.diagnostics.push_back("hop " + std::to_string(k + 1) + " title '" + h.title +
                                "' shares no tokens with any candidate");
    h.title = candidates[best];
  }
  out.path = std::move(path);
  return out;
}

/// Per-segment exact match of a predicted path against gold.
/// Facts flags exist only for the full schema, the answer flag only when the
/// schema carries an answer.
struct SegmentFlags {
  std::vector<bool> titles;
  std::vector<bool> facts;
  std::optional<bool> answer;
  int extra_hops = 0;

  int correct() const {
    return static_cast<int>(std::count(titles.begin(), titles.end(), true) +
                            std::count(facts.begin(), facts.end(), true)) +
           (answer.value_or(false) ? 1 : 0);
  }

  bool all() const {
    return std::all_of(titles.begin(), titles.end(), [](bool b) { return b; }) &&
           std::all_of(facts.begin(), facts.end(), [](bool b) { return b; }) && answer.value_or(true) &&
           extra_hops == 0;
  }

  /// Names and values in the order T1, F1, T2, F2, ..., Answer.
  std::vector<std::pair<std::string, bool>> named() const {
    std::vector<std::pair<std::string, bool>> out;
    for (std::size_t k = 0; k < titles.size(); ++k) {
      out.emplace_back("T" + std::to_string(k + 1), titles[k]);
      if (k < facts.size()) out.emplace_back("F" + std::to_string(k + 1), facts[k]);
    }
    if (answer) out.emplace_back("Answer", *answer);
    return out;
  }
};

inline SegmentFlags path_segment_em(const ReasoningPath& pred, const ReasoningPath& gold,
                                    PathSchema schema = PathSchema::full) {
  SegmentFlags f;
  for (std::size_t k = 0; k < gold.hops.size(); ++k) {
    const Hop* p = k < pred.hops.size() ? &pred.hops[k] : nullptr;
    f.titles.push_back(p && p->title == gold.hops[k].title);
    if (schema_has_facts(schema)) f.facts.push_back(p && p->facts == gold.hops[k].facts);
  }
  if (schema_has_answer(schema) && gold.answer)
    f.answer = pred.answer && normalize_answer(*pred.answer) == normalize_answer(*gold.answer);
  f.extra_hops = static_cast<int>(pred.hops.size() > gold.hops.size() ? pred.hops.size() - gold.hops.size() : 0);
  return f;
}

/// Segment EM where a two-hop gold path may be matched in either order
/// (the comparison-question statistic).
inline SegmentFlags path_segment_em_any_order(const ReasoningPath& pred, const ReasoningPath& gold,
                                              PathSchema schema = PathSchema::full) {
  SegmentFlags direct = path_segment_em(pred, gold, schema);
  if (gold.hops.size() != 2) return direct;
  ReasoningPath swapped = gold;
  std::swap(swapped.hops[0], swapped.hops[1]);
  SegmentFlags other = path_segment_em(pred, swapped, schema);
  return other.correct() > direct.correct() ? other : direct;
}

}  // namespace pathfid

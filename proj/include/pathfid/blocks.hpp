#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pathfid/corpus.hpp"
#include "pathfid/error.hpp"
#include "pathfid/markers.hpp"
#include "pathfid/text.hpp"

namespace pathfid {

enum class BlockKind { fid, path, path_plus };

inline std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::fid: return "fid";
    case BlockKind::path: return "path";
    case BlockKind::path_plus: return "path_plus";
  }
  return "fid";
}

inline constexpr int kDefaultBlockLen = 256;
inline constexpr int kDefaultPairBlockLen = 512;

inline int default_max_len(BlockKind k) {
  return k == BlockKind::path_plus ? kDefaultPairBlockLen : kDefaultBlockLen;
}

struct InputBlock {
  Tokens tokens;
  std::vector<std::string> source_titles;
  BlockKind kind = BlockKind::fid;

  std::string text() const { return join(tokens); }
  bool operator==(const InputBlock&) const = default;
};

/// Modelling formulation: which blocks feed the encoder.
enum class Mode { fid, pathfid, pathfid_plus };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::fid: return "fid";
    case Mode::pathfid: return "pathfid";
    case Mode::pathfid_plus: return "pathfid_plus";
  }
  return "fid";
}

inline Mode mode_from(std::string_view s) {
  if (s == "fid") return Mode::fid;
  if (s == "pathfid") return Mode::pathfid;
  if (s == "pathfid_plus") return Mode::pathfid_plus;
  throw Error("blocks", "unknown mode '" + std::string(s) + "'");
}

namespace detail {

inline void append(Tokens& dst, const Tokens& src) { dst.insert(dst.end(), src.begin(), src.end()); }

inline void append_text(Tokens& dst, std::string_view s) { append(dst, split_whitespace(s)); }

inline void require_question(std::string_view q) {
  if (trim(q).empty()) throw Error("blocks", "question must be non-empty");
}

inline void require_passage(const Passage& p) {
  if (auto err = validate_passage(p)) throw Error("blocks", *err);
}

// `<f1> s1 <f2> s2 ...`
inline void append_path_context(Tokens& dst, const Passage& p) {
  if (static_cast<int>(p.sentences.size()) > kMaxFactMarkers)
    throw Error("blocks", "passage '" + p.title + "' has " + std::to_string(p.sentences.size()) +
                              " sentences, more than the " + std::to_string(kMaxFactMarkers) +
                              " available fact markers");
  for (std::size_t i = 0; i < p.sentences.size(); ++i) {
    dst.push_back(fact_marker(static_cast<int>(i) + 1));
    append_text(dst, p.sentences[i]);
  }
}

// Tokens up to and including the marker that opens the (first) context.
inline std::size_t template_prefix_len(const InputBlock& b) {
  std::string_view opener = b.kind == BlockKind::path_plus ? "<context-1>" : kContextPrefix;
  for (std::size_t i = 0; i < b.tokens.size(); ++i)
    if (b.tokens[i] == opener) return i + 1;
  return b.tokens.size();
}

}  // namespace detail

/// Right-side truncation to `max_len` tokens. Trailing markers left without
/// content are dropped as well, so the cut never leaves a dangling marker.
inline InputBlock truncate_block(InputBlock b, int max_len) {
  if (max_len <= static_cast<int>(detail::template_prefix_len(b)))
    throw Error("blocks", "max_len " + std::to_string(max_len) +
                              " does not exceed the block's template prefix");
  if (static_cast<int>(b.tokens.size()) <= max_len) return b;
  b.tokens.resize(static_cast<std::size_t>(max_len));
  while (!b.tokens.empty() && is_marker(b.tokens.back())) b.tokens.pop_back();
  return b;
}

/// `question: q title: t context: s1 s2 ...`
inline InputBlock build_fid_block(std::string_view q, const Passage& p,
                                  std::optional<int> max_len = std::nullopt) {
  detail::require_question(q);
  detail::require_passage(p);
  InputBlock b;
  b.kind = BlockKind::fid;
  b.source_titles = {p.title};
  b.tokens.emplace_back(kQuestionPrefix);
  detail::append_text(b.tokens, q);
  b.tokens.emplace_back(kTitlePrefix);
  detail::append_text(b.tokens, p.title);
  b.tokens.emplace_back(kContextPrefix);
  for (const auto& s : p.sentences) detail::append_text(b.tokens, s);
  return truncate_block(std::move(b), max_len.value_or(kDefaultBlockLen));
}

/// `question: q title: t context: <f1> s1 <f2> s2 ...`
inline InputBlock build_path_block(std::string_view q, const Passage& p,
                                   std::optional<int> max_len = std::nullopt) {
  detail::require_question(q);
  detail::require_passage(p);
  InputBlock b;
  b.kind = BlockKind::path;
  b.source_titles = {p.title};
  b.tokens.emplace_back(kQuestionPrefix);
  detail::append_text(b.tokens, q);
  b.tokens.emplace_back(kTitlePrefix);
  detail::append_text(b.tokens, p.title);
  b.tokens.emplace_back(kContextPrefix);
  detail::append_path_context(b.tokens, p);
  return truncate_block(std::move(b), max_len.value_or(kDefaultBlockLen));
}

/// `question: q <title-1> t1 <context-1> ctx(p1) <title-2> t2 <context-2> ctx(p2)`
inline InputBlock build_pathplus_block(std::string_view q, const Passage& p1, const Passage& p2,
                                       std::optional<int> max_len = std::nullopt) {
  detail::require_question(q);
  detail::require_passage(p1);
  detail::require_passage(p2);
  InputBlock b;
  b.kind = BlockKind::path_plus;
  b.source_titles = {p1.title, p2.title};
  b.tokens.emplace_back(kQuestionPrefix);
  detail::append_text(b.tokens, q);
  int k = 1;
  for (const Passage* p : {&p1, &p2}) {
    b.tokens.push_back(title_marker(k));
    detail::append_text(b.tokens, p->title);
    b.tokens.push_back(context_marker(k));
    detail::append_path_context(b.tokens, *p);
    ++k;
  }
  return truncate_block(std::move(b), max_len.value_or(kDefaultPairBlockLen));
}

/// {(p*, p_1), ..., (p*, p_N)} in input order, (p*, p*) included.
inline std::vector<std::pair<Passage, Passage>> build_pair_set(const std::vector<Passage>& passages,
                                                               std::string_view p_star) {
  const Passage* star = nullptr;
  for (const auto& p : passages)
    if (p.title == p_star) {
      star = &p;
      break;
    }
  if (!star) throw Error("blocks", "p* title '" + std::string(p_star) + "' not among passages");
  std::vector<std::pair<Passage, Passage>> out;
  out.reserve(passages.size());
  for (const auto& p : passages) out.emplace_back(*star, p);
  return out;
}

/// Checks the per-kind marker invariant on a possibly truncated block.
/// Returns a description of the violation, if any.
inline std::optional<std::string> check_block_markers(const InputBlock& b, int max_len) {
  if (static_cast<int>(b.tokens.size()) > max_len) return "block longer than max_len";
  if (!b.tokens.empty() && is_marker(b.tokens.back())) return "block ends with a dangling marker";
  int expected = 1;
  int contexts = 0;
  for (const auto& t : b.tokens) {
    if (auto j = as_fact_marker(t)) {
      if (b.kind == BlockKind::fid) return "fid block contains a fact marker";
      if (*j != expected) return "fact markers out of order at " + t;
      ++expected;
    } else if (auto c = as_context_marker(t)) {
      if (b.kind != BlockKind::path_plus) return "context marker outside a pair block";
      if (*c != contexts + 1) return "context markers out of order";
      ++contexts;
      expected = 1;
    }
  }
  return std::nullopt;
}

/// All encoder blocks of an instance for a mode. `p_star` is required for
/// pathfid_plus.
inline std::vector<InputBlock> build_instance_blocks(const QuestionInstance& q, Mode mode,
                                                     std::optional<std::string> p_star = std::nullopt,
                                                     std::optional<int> max_len = std::nullopt) {
  std::vector<InputBlock> out;
  switch (mode) {
    case Mode::fid:
      for (const auto& p : q.passages) out.push_back(build_fid_block(q.question, p, max_len));
      break;
    case Mode::pathfid:
      for (const auto& p : q.passages) out.push_back(build_path_block(q.question, p, max_len));
      break;
    case Mode::pathfid_plus: {
      if (!p_star) throw Error("blocks", "pathfid_plus requires p*");
      for (const auto& [a, b] : build_pair_set(q.passages, *p_star))
        out.push_back(build_pathplus_block(q.question, a, b, max_len));
      break;
    }
  }
  return out;
}

}  // namespace pathfid

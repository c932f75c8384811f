#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pathfid {

using Tokens = std::vector<std::string>;

inline Tokens split_whitespace(std::string_view s) {
  Tokens out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename It>
std::string join(It first, It last, std::string_view sep = " ") {
  std::string out;
  for (It it = first; it != last; ++it) {
    if (it != first) out += sep;
    out += *it;
  }
  return out;
}

inline std::string join(const Tokens& toks, std::string_view sep = " ") {
  return join(toks.begin(), toks.end(), sep);
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// SQuAD-style answer normalization: lowercase, strip ASCII punctuation,
/// drop the articles a/an/the, collapse whitespace.
inline std::string normalize_answer(std::string_view s) {
  std::string lowered = to_lower(s);
  std::string no_punct;
  no_punct.reserve(lowered.size());
  for (char c : lowered) {
    if (!std::ispunct(static_cast<unsigned char>(c))) no_punct.push_back(c);
  }
  Tokens kept;
  for (auto& tok : split_whitespace(no_punct)) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    kept.push_back(std::move(tok));
  }
  return join(kept);
}

inline Tokens normalized_tokens(std::string_view s) {
  return split_whitespace(normalize_answer(s));
}

/// Harmonic mean of precision/recall over token multisets. Both empty scores 1.
inline double multiset_f1(const Tokens& pred, const Tokens& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string_view, int> counts;
  for (const auto& t : gold) ++counts[t];
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

/// True when `needle` occurs as a contiguous run inside `hay`. An empty
/// needle never matches.
inline bool contains_token_run(const Tokens& hay, const Tokens& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace pathfid

#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pathfid {

// Upper bound on sentences per passage addressable by a fact marker.
inline constexpr int kMaxFactMarkers = 32;
// Upper bound on hops addressable by <title-k>/<facts-k>.
inline constexpr int kMaxHops = 8;

inline constexpr std::string_view kAnswerMarker = "<answer>";
inline constexpr std::string_view kQuestionPrefix = "question:";
inline constexpr std::string_view kTitlePrefix = "title:";
inline constexpr std::string_view kContextPrefix = "context:";

inline std::string fact_marker(int j) { return "<f" + std::to_string(j) + ">"; }
inline std::string title_marker(int k) { return "<title-" + std::to_string(k) + ">"; }
inline std::string facts_marker(int k) { return "<facts-" + std::to_string(k) + ">"; }
inline std::string context_marker(int k) { return "<context-" + std::to_string(k) + ">"; }

namespace detail {

// Parses `<{stem}{n}>` with n a positive decimal without leading zeros.
inline std::optional<int> parse_indexed(std::string_view tok, std::string_view stem) {
  if (tok.size() < stem.size() + 3 || tok.front() != '<' || tok.back() != '>') return std::nullopt;
  if (tok.substr(1, stem.size()) != stem) return std::nullopt;
  std::string_view digits = tok.substr(1 + stem.size(), tok.size() - stem.size() - 2);
  if (digits.empty() || digits.size() > 6 || digits.front() == '0') return std::nullopt;
  for (char c : digits)
    if (c < '0' || c > '9') return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

}  // namespace detail

inline std::optional<int> as_fact_marker(std::string_view tok) { return detail::parse_indexed(tok, "f"); }
inline std::optional<int> as_title_marker(std::string_view tok) { return detail::parse_indexed(tok, "title-"); }
inline std::optional<int> as_facts_marker(std::string_view tok) { return detail::parse_indexed(tok, "facts-"); }
inline std::optional<int> as_context_marker(std::string_view tok) { return detail::parse_indexed(tok, "context-"); }

/// Any reserved structural token: fact/title/facts/context markers, the
/// answer marker and the field prefixes.
inline bool is_marker(std::string_view tok) {
  return as_fact_marker(tok) || as_title_marker(tok) || as_facts_marker(tok) ||
         as_context_marker(tok) || tok == kAnswerMarker || tok == kQuestionPrefix ||
         tok == kTitlePrefix || tok == kContextPrefix;
}

/// Fixed marker inventory shared by input blocks and target paths.
struct MarkerVocabulary {
  std::vector<std::string> fact_markers;
  std::vector<std::string> title_markers;
  std::vector<std::string> facts_markers;
  std::string answer_marker{kAnswerMarker};
  std::vector<std::string> context_markers;
  std::vector<std::string> field_prefixes;

  static MarkerVocabulary standard() {
    MarkerVocabulary v;
    for (int j = 1; j <= kMaxFactMarkers; ++j) v.fact_markers.push_back(fact_marker(j));
    for (int k = 1; k <= kMaxHops; ++k) {
      v.title_markers.push_back(title_marker(k));
      v.facts_markers.push_back(facts_marker(k));
    }
    v.context_markers = {context_marker(1), context_marker(2)};
    v.field_prefixes = {std::string(kQuestionPrefix), std::string(kTitlePrefix),
                        std::string(kContextPrefix)};
    return v;
  }

  std::vector<std::string> all() const {
    std::vector<std::string> out;
    out.insert(out.end(), fact_markers.begin(), fact_markers.end());
    out.insert(out.end(), title_markers.begin(), title_markers.end());
    out.insert(out.end(), facts_markers.begin(), facts_markers.end());
    out.push_back(answer_marker);
    out.insert(out.end(), context_markers.begin(), context_markers.end());
    out.insert(out.end(), field_prefixes.begin(), field_prefixes.end());
    return out;
  }
};

}  // namespace pathfid

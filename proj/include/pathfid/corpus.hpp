#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathfid/error.hpp"
#include "pathfid/markers.hpp"
#include "pathfid/rng.hpp"
#include "pathfid/text.hpp"

namespace pathfid {

using json = nlohmann::json;

struct Passage {
  std::string title;
  std::vector<std::string> sentences;
  std::vector<std::string> links;  // outgoing hyperlink titles, may be empty

  bool operator==(const Passage&) const = default;
};

enum class QuestionType { bridge, comparison, other };

inline std::string to_string(QuestionType t) {
  switch (t) {
    case QuestionType::bridge: return "bridge";
    case QuestionType::comparison: return "comparison";
    case QuestionType::other: return "other";
  }
  return "other";
}

inline QuestionType question_type_from(std::string_view s) {
  if (s == "bridge") return QuestionType::bridge;
  if (s == "comparison") return QuestionType::comparison;
  return QuestionType::other;
}

/// (title, 0-based sentence index)
struct SupportFact {
  std::string title;
  int sentence = 0;

  auto operator<=>(const SupportFact&) const = default;
};

using SupportSet = std::set<SupportFact>;

struct QuestionInstance {
  std::string id;
  std::string question;
  std::vector<Passage> passages;
  std::string answer;
  QuestionType type = QuestionType::other;
  SupportSet gold_supports;
  std::set<std::string> gold_passage_titles;

  const Passage* find(std::string_view title) const {
    for (const auto& p : passages)
      if (p.title == title) return &p;
    return nullptr;
  }

  std::vector<std::string> titles() const {
    std::vector<std::string> out;
    out.reserve(passages.size());
    for (const auto& p : passages) out.push_back(p.title);
    return out;
  }

  bool operator==(const QuestionInstance&) const = default;
};

struct RejectedRecord {
  std::string id;
  std::string reason;
};

struct LoadResult {
  std::vector<QuestionInstance> instances;
  std::vector<RejectedRecord> rejected;
};

inline std::optional<std::string> validate_passage(const Passage& p) {
  if (trim(p.title).empty()) return "passage with empty title";
  if (p.sentences.empty()) return "passage '" + p.title + "' has no sentences";
  return std::nullopt;
}

/// Returns a description of the first broken invariant, if any.
inline std::optional<std::string> validate_instance(const QuestionInstance& q) {
  for (const auto& p : q.passages)
    if (auto err = validate_passage(p)) return err;
  for (const auto& sf : q.gold_supports) {
    const Passage* p = q.find(sf.title);
    if (!p) return "supporting fact cites unknown title '" + sf.title + "'";
    if (sf.sentence < 0 || sf.sentence >= static_cast<int>(p->sentences.size()))
      return "supporting fact (" + sf.title + ", " + std::to_string(sf.sentence) +
             ") out of range for a " + std::to_string(p->sentences.size()) + "-sentence passage";
  }
  std::set<std::string> from_supports;
  for (const auto& sf : q.gold_supports) from_supports.insert(sf.title);
  if (from_supports != q.gold_passage_titles)
    return "gold passage titles disagree with supporting facts";
  for (const auto& t : q.gold_passage_titles)
    if (!q.find(t)) return "gold passage '" + t + "' not among passages";
  return std::nullopt;
}

inline std::set<std::string> titles_of(const SupportSet& s) {
  std::set<std::string> out;
  for (const auto& sf : s) out.insert(sf.title);
  return out;
}

// ---------------------------------------------------------------------------
// HotpotQA distractor schema

namespace detail {

struct RecordError {
  std::string field;
  std::string reason;
};

inline const json& require(const json& rec, const char* field, json::value_t type) {
  auto it = rec.find(field);
  if (it == rec.end()) throw RecordError{field, "missing field '" + std::string(field) + "'"};
  if (it->type() != type &&
      !(type == json::value_t::number_integer && it->is_number_integer()))
    throw RecordError{field, "field '" + std::string(field) + "' has wrong type"};
  return *it;
}

inline std::string record_id(const json& rec, std::size_t index, const char* key) {
  if (rec.is_object()) {
    auto it = rec.find(key);
    if (it != rec.end() && it->is_string()) return it->get<std::string>();
  }
  return "#" + std::to_string(index);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("corpus", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("corpus", "malformed JSON in '" + path + "': " + e.what());
  }
}

inline QuestionInstance hotpot_record(const json& rec) {
  if (!rec.is_object()) throw RecordError{"<record>", "record is not an object"};
  QuestionInstance q;
  q.id = require(rec, "_id", json::value_t::string).get<std::string>();
  q.question = require(rec, "question", json::value_t::string).get<std::string>();
  q.answer = require(rec, "answer", json::value_t::string).get<std::string>();
  if (auto it = rec.find("type"); it != rec.end() && it->is_string())
    q.type = question_type_from(it->get<std::string>());
  const json& ctx = require(rec, "context", json::value_t::array);
  for (const auto& entry : ctx) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() || !entry[1].is_array())
      throw RecordError{"context", "context entry is not [title, [sentences]]"};
    Passage p;
    p.title = entry[0].get<std::string>();
    for (const auto& s : entry[1]) {
      if (!s.is_string()) throw RecordError{"context", "non-string sentence in '" + p.title + "'"};
      p.sentences.push_back(s.get<std::string>());
    }
    q.passages.push_back(std::move(p));
  }
  const json& sp = require(rec, "supporting_facts", json::value_t::array);
  for (const auto& f : sp) {
    if (!f.is_array() || f.size() != 2 || !f[0].is_string() || !f[1].is_number_integer())
      throw RecordError{"supporting_facts", "supporting fact is not [title, sent_id]"};
    q.gold_supports.insert({f[0].get<std::string>(), f[1].get<int>()});
  }
  q.gold_passage_titles = titles_of(q.gold_supports);
  if (auto it = rec.find("links"); it != rec.end() && it->is_object()) {
    for (auto& p : q.passages) {
      auto lt = it->find(p.title);
      if (lt != it->end() && lt->is_array())
        for (const auto& t : *lt)
          if (t.is_string()) p.links.push_back(t.get<std::string>());
    }
  }
  return q;
}

}  // namespace detail

/// Parses an in-memory HotpotQA-format array. Structural problems in
/// individual records land in `rejected`; a non-array document throws.
inline LoadResult parse_hotpot(const json& doc) {
  if (!doc.is_array()) throw Error("corpus", "HotpotQA document must be a JSON array");
  LoadResult out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    std::string id = detail::record_id(rec, i, "_id");
    try {
      QuestionInstance q = detail::hotpot_record(rec);
      if (auto err = validate_instance(q)) {
        out.rejected.push_back({id, *err});
        continue;
      }
      out.instances.push_back(std::move(q));
    } catch (const detail::RecordError& e) {
      out.rejected.push_back({id, e.field + ": " + e.reason});
    }
  }
  return out;
}

inline LoadResult load_hotpot(const std::string& path) {
  return parse_hotpot(detail::read_json_file(path));
}

/// Serializes to the HotpotQA schema. Hyperlinks, when any passage has them,
/// go in an extra "links" object keyed by title.
inline json to_hotpot_json(const std::vector<QuestionInstance>& instances) {
  json arr = json::array();
  for (const auto& q : instances) {
    json rec;
    rec["_id"] = q.id;
    rec["question"] = q.question;
    rec["answer"] = q.answer;
    rec["type"] = to_string(q.type);
    json sp = json::array();
    for (const auto& sf : q.gold_supports) sp.push_back(json::array({sf.title, sf.sentence}));
    rec["supporting_facts"] = std::move(sp);
    json ctx = json::array();
    json links = json::object();
    for (const auto& p : q.passages) {
      ctx.push_back(json::array({p.title, p.sentences}));
      if (!p.links.empty()) links[p.title] = p.links;
    }
    rec["context"] = std::move(ctx);
    if (!links.empty()) rec["links"] = std::move(links);
    arr.push_back(std::move(rec));
  }
  return arr;
}

inline void save_hotpot(const std::string& path, const std::vector<QuestionInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw Error("corpus", "cannot write '" + path + "'");
  out << to_hotpot_json(instances).dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// IIRC

struct SentenceSpan {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Splits after '.', '!' or '?' followed by whitespace. Offsets index `text`.
inline std::vector<SentenceSpan> split_sentences(std::string_view text) {
  std::vector<SentenceSpan> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    std::string_view piece = text.substr(start, end - start);
    auto b = piece.find_first_not_of(" \t\r\n");
    if (b != std::string_view::npos) {
      auto e = piece.find_last_not_of(" \t\r\n");
      out.push_back({std::string(piece.substr(b, e - b + 1)), start + b, start + e + 1});
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
        std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      flush(i + 1);
      start = i + 1;
    }
  }
  flush(text.size());
  return out;
}

inline std::string strip_html(std::string_view s) {
  std::string out;
  bool in_tag = false;
  for (char c : s) {
    if (c == '<') in_tag = true;
    else if (c == '>') in_tag = false;
    else if (!in_tag) out.push_back(c);
  }
  return out;
}

namespace detail {

struct IircPassage {
  Passage passage;
  std::vector<SentenceSpan> spans;
  std::string text;
};

inline IircPassage iirc_passage(std::string title, const std::string& text) {
  IircPassage p;
  p.text = text;
  p.spans = split_sentences(text);
  p.passage.title = std::move(title);
  for (const auto& s : p.spans) p.passage.sentences.push_back(s.text);
  return p;
}

inline std::string iirc_answer(const json& ans) {
  if (!ans.is_object()) throw RecordError{"answer", "answer is not an object"};
  std::string type = ans.value("type", "");
  if (type == "none") return "unanswerable";
  if (type == "binary") {
    auto it = ans.find("answer_value");
    if (it == ans.end()) throw RecordError{"answer", "binary answer without answer_value"};
    if (it->is_boolean()) return it->get<bool>() ? "yes" : "no";
    std::string v = to_lower(trim(it->is_string() ? it->get<std::string>() : it->dump()));
    if (v == "true" || v == "yes") return "yes";
    if (v == "false" || v == "no") return "no";
    throw RecordError{"answer", "unrecognized binary answer '" + v + "'"};
  }
  if (type == "value") {
    auto it = ans.find("answer_value");
    if (it == ans.end()) throw RecordError{"answer", "numeric answer without answer_value"};
    return trim(it->is_string() ? it->get<std::string>() : it->dump());
  }
  if (type == "span") {
    auto it = ans.find("answer_spans");
    if (it == ans.end() || !it->is_array() || it->empty())
      throw RecordError{"answer", "span answer without answer_spans"};
    Tokens parts;
    for (const auto& s : *it) {
      if (!s.is_object() || !s.contains("text") || !s["text"].is_string())
        throw RecordError{"answer", "answer span without text"};
      parts.push_back(trim(s["text"].get<std::string>()));
    }
    return join(parts);
  }
  throw RecordError{"answer", "unknown answer type '" + type + "'"};
}

}  // namespace detail

/// Parses the IIRC release layout: an array of main passages, each carrying
/// its questions. `articles` maps linked-article titles (exact or lowercase)
/// to their text; linked passages without an article fall back to the
/// question's context snippets.
inline LoadResult parse_iirc(const json& doc, const json& articles = json::object()) {
  if (!doc.is_array()) throw Error("corpus", "IIRC document must be a JSON array");
  auto lookup_article = [&](const std::string& title) -> std::optional<std::string> {
    if (!articles.is_object()) return std::nullopt;
    for (const auto& key : {title, to_lower(title)}) {
      auto it = articles.find(key);
      if (it != articles.end() && it->is_string()) return strip_html(it->get<std::string>());
    }
    return std::nullopt;
  };

  LoadResult out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& main = doc[i];
    std::string main_id = detail::record_id(main, i, "pid");
    if (!main.is_object() || !main.contains("title") || !main["title"].is_string() ||
        !main.contains("text") || !main["text"].is_string()) {
      out.rejected.push_back({main_id, "main passage: missing title or text"});
      continue;
    }
    detail::IircPassage main_p =
        detail::iirc_passage(main["title"].get<std::string>(), main["text"].get<std::string>());
    if (auto it = main.find("links"); it != main.end() && it->is_array())
      for (const auto& l : *it)
        if (l.is_object() && l.contains("target") && l["target"].is_string())
          main_p.passage.links.push_back(l["target"].get<std::string>());
    auto qs = main.find("questions");
    if (qs == main.end() || !qs->is_array()) {
      out.rejected.push_back({main_id, "questions: missing field 'questions'"});
      continue;
    }
    for (std::size_t k = 0; k < qs->size(); ++k) {
      const json& rec = (*qs)[k];
      std::string id = detail::record_id(rec, k, "qid");
      if (id.starts_with("#")) id = main_id + id;
      try {
        if (!rec.is_object()) throw detail::RecordError{"<record>", "question is not an object"};
        QuestionInstance q;
        q.id = id;
        q.type = QuestionType::other;
        q.question = detail::require(rec, "question", json::value_t::string).get<std::string>();
        q.answer = detail::iirc_answer(detail::require(rec, "answer", json::value_t::object));

        std::vector<detail::IircPassage> pool{main_p};
        std::map<std::string, std::vector<std::string>> snippets;
        const json* context = nullptr;
        if (auto it = rec.find("context"); it != rec.end() && it->is_array()) context = &*it;
        if (context) {
          for (const auto& c : *context)
            if (c.is_object() && c.contains("passage") && c.contains("text") && c["text"].is_string())
              snippets[c["passage"].get<std::string>()].push_back(c["text"].get<std::string>());
        }
        if (auto it = rec.find("question_links"); it != rec.end() && it->is_array()) {
          for (const auto& l : *it) {
            if (!l.is_string()) continue;
            std::string title = l.get<std::string>();
            if (title == main_p.passage.title) continue;
            bool dup = false;
            for (const auto& p : pool) dup = dup || p.passage.title == title;
            if (dup) continue;
            if (auto text = lookup_article(title)) {
              auto p = detail::iirc_passage(title, *text);
              if (!p.passage.sentences.empty()) pool.push_back(std::move(p));
            } else if (auto s = snippets.find(title); s != snippets.end()) {
              detail::IircPassage p;
              p.passage.title = title;
              for (const auto& t : s->second) {
                p.spans.push_back({trim(t), p.text.size(), p.text.size() + trim(t).size()});
                p.passage.sentences.push_back(trim(t));
                p.text += trim(t) + " ";
              }
              pool.push_back(std::move(p));
            }
          }
        }
        if (context) {
          for (const auto& c : *context) {
            if (!c.is_object() || !c.contains("text") || !c["text"].is_string()) continue;
            std::string who = c.value("passage", "main");
            const detail::IircPassage* src = nullptr;
            for (const auto& p : pool)
              if ((who == "main" && &p == &pool.front()) || p.passage.title == who) src = &p;
            if (!src) continue;
            std::string snippet = trim(c["text"].get<std::string>());
            std::size_t b = src->text.find(snippet);
            std::size_t e = b == std::string::npos ? b : b + snippet.size();
            if (b == std::string::npos && c.contains("indices") && c["indices"].is_array() &&
                c["indices"].size() == 2 && c["indices"][0].is_number_integer()) {
              b = c["indices"][0].get<std::size_t>();
              e = c["indices"][1].get<std::size_t>();
            }
            if (b == std::string::npos || snippet.empty()) continue;
            for (std::size_t s = 0; s < src->spans.size(); ++s)
              if (src->spans[s].begin < e && b < src->spans[s].end)
                q.gold_supports.insert({src->passage.title, static_cast<int>(s)});
          }
        }
        for (auto& p : pool) q.passages.push_back(std::move(p.passage));
        q.gold_passage_titles = titles_of(q.gold_supports);
        if (auto err = validate_instance(q)) {
          out.rejected.push_back({id, *err});
          continue;
        }
        out.instances.push_back(std::move(q));
      } catch (const detail::RecordError& e) {
        out.rejected.push_back({id, e.field + ": " + e.reason});
      }
    }
  }
  return out;
}

inline LoadResult load_iirc(const std::string& path, const std::string& articles_path = "") {
  json articles = articles_path.empty() ? json::object() : detail::read_json_file(articles_path);
  return parse_iirc(detail::read_json_file(path), articles);
}

// ---------------------------------------------------------------------------
// Synthetic bridge-chain corpus

struct SyntheticConfig {
  int num_instances = 64;
  int num_distractors = 8;
  int hops = 2;
  int vocab_size = 200;
  int sentences_per_passage = 3;
  std::uint64_t rng_seed = 7;

  void validate() const {
    if (num_instances <= 0 || num_distractors <= 0 || vocab_size <= 0 || sentences_per_passage <= 0)
      throw Error("corpus", "synthetic config counts must be positive");
    if (hops < 2) throw Error("corpus", "synthetic config requires hops >= 2");
    if (hops > kMaxHops) throw Error("corpus", "synthetic config hops exceeds marker inventory");
    if (sentences_per_passage > kMaxFactMarkers)
      throw Error("corpus", "sentences_per_passage exceeds fact marker inventory");
    if (vocab_size < 4) throw Error("corpus", "vocab_size must be at least 4");
  }
};

namespace detail {

inline const std::vector<std::string>& name_heads() {
  static const std::vector<std::string> v{"amber", "brisk", "cedar", "dusk",  "ember",   "frost",
                                          "gale",  "hazel", "iris",  "jade",  "kestrel", "lumen",
                                          "moss",  "nova",  "onyx",  "pine"};
  return v;
}

inline const std::vector<std::string>& name_kinds() {
  static const std::vector<std::string> v{"river",  "hall",   "city",   "tower",  "lake",   "valley",
                                          "harbor", "forest", "bridge", "market", "castle", "garden"};
  return v;
}

inline const std::vector<std::string>& filler_nouns() {
  static const std::vector<std::string> v{"music",  "pottery", "sailing", "weaving", "orchards",
                                          "copper", "lanterns", "poetry", "horses",  "bells",
                                          "salt",   "glass",   "tea",     "wool",    "murals",
                                          "kites"};
  return v;
}

// Pronounceable pseudo-words: two syllables, a third once the pool runs out.
inline std::string pseudo_word(int i) {
  static const char* syl[] = {"ka", "lo", "mi", "ren", "sa", "tu", "vel", "dor", "fi", "gan",
                              "ho", "ju", "ne", "pa", "qui", "ro", "si", "ta", "ur", "zo"};
  constexpr int n = 20;
  std::string w = std::string(syl[i % n]) + syl[(i / n) % n];
  if (i >= n * n) w += syl[(i / (n * n)) % n];
  return w;
}

struct Relation {
  const char* link;      // "{A} <link> {B} ."
  const char* question;  // phrase used in the question
};

inline const std::vector<Relation>& relations() {
  static const std::vector<Relation> v{{"was founded near", "founded near"},
                                       {"sits beside", "beside"},
                                       {"is governed from", "governing"}};
  return v;
}

struct Attribute {
  const char* sentence;  // "{B} <sentence> {v} ."
  const char* noun;
};

inline const std::vector<Attribute>& attributes() {
  static const std::vector<Attribute> v{{"has a population of", "population"},
                                        {"rises to an elevation of", "elevation"},
                                        {"was established in the year", "founding year"}};
  return v;
}

}  // namespace detail

/// Generates bridge-chain questions: the head passage's key sentence names
/// the next entity, the last passage's key sentence carries the answer.
/// Distractors reuse the templates with unrelated entities.
inline std::vector<QuestionInstance> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  std::set<std::string> used_heads;
  std::set<std::string> used_values;

  auto entity = [&] {
    return rng.pick(detail::name_heads()) + " " +
           detail::pseudo_word(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size)))) + " " +
           rng.pick(detail::name_kinds());
  };
  auto value_for = [&](std::size_t attr) {
    for (;;) {
      std::string v;
      if (attr == 2) {
        v = std::to_string(1100 + rng.below(900));
      } else {
        std::uint64_t n = 1000 + rng.below(attr == 0 ? 98000 : 8000);
        v = std::to_string(n);
        if (v.size() > 3) v.insert(v.size() - 3, ",");
      }
      if (used_values.insert(v).second) return v;
    }
  };
  auto filler = [&](const std::string& title) {
    const auto& nouns = detail::filler_nouns();
    switch (rng.below(3)) {
      case 0: return title + " is known for " + rng.pick(nouns) + " and " + rng.pick(nouns) + " .";
      case 1: return title + " hosts a yearly " + rng.pick(nouns) + " fair .";
      default: return "visitors to " + title + " often mention its " + rng.pick(nouns) + " .";
    }
  };
  auto make_passage = [&](const std::string& title, const std::string& key, int& key_index) {
    Passage p;
    p.title = title;
    key_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.sentences_per_passage)));
    for (int s = 0; s < cfg.sentences_per_passage; ++s)
      p.sentences.push_back(s == key_index ? key : filler(title));
    return p;
  };

  std::vector<QuestionInstance> out;
  out.reserve(static_cast<std::size_t>(cfg.num_instances));
  for (int i = 0; i < cfg.num_instances; ++i) {
    std::set<std::string> local;
    auto fresh = [&](bool head) {
      for (;;) {
        std::string e = entity();
        if (local.count(e)) continue;
        if (head && used_heads.count(e)) continue;
        local.insert(e);
        if (head) used_heads.insert(e);
        return e;
      }
    };

    QuestionInstance q;
    q.id = "synth-" + std::to_string(cfg.rng_seed) + "-" + std::to_string(i);
    q.type = QuestionType::bridge;

    std::vector<std::string> chain{fresh(true)};
    for (int h = 1; h < cfg.hops; ++h) chain.push_back(fresh(false));
    std::size_t rel = static_cast<std::size_t>(rng.below(detail::relations().size()));
    std::size_t attr = static_cast<std::size_t>(rng.below(detail::attributes().size()));
    q.answer = value_for(attr);

    std::vector<Passage> pool;
    for (int h = 0; h < cfg.hops; ++h) {
      const std::string& t = chain[static_cast<std::size_t>(h)];
      std::string key = h + 1 < cfg.hops
                            ? t + " " + detail::relations()[rel].link + " " + chain[static_cast<std::size_t>(h) + 1] + " ."
                            : t + " " + detail::attributes()[attr].sentence + " " + q.answer + " .";
      int key_index = 0;
      Passage p = make_passage(t, key, key_index);
      if (h + 1 < cfg.hops) p.links.push_back(chain[static_cast<std::size_t>(h) + 1]);
      q.gold_supports.insert({t, key_index});
      pool.push_back(std::move(p));
    }
    for (int d = 0; d < cfg.num_distractors; ++d) {
      std::string t = fresh(false);
      std::string key;
      std::vector<std::string> links;
      if (rng.below(2) == 0) {
        std::string other = entity();
        key = t + " " + rng.pick(detail::relations()).link + " " + other + " .";
        links.push_back(other);
      } else {
        std::size_t a = static_cast<std::size_t>(rng.below(detail::attributes().size()));
        key = t + " " + detail::attributes()[a].sentence + " " + value_for(a) + " .";
      }
      int key_index = 0;
      Passage p = make_passage(t, key, key_index);
      p.links = std::move(links);
      pool.push_back(std::move(p));
    }
    rng.shuffle(pool);
    q.passages = std::move(pool);
    q.gold_passage_titles = titles_of(q.gold_supports);

    std::string steps = cfg.hops == 2 ? "" : " after " + std::to_string(cfg.hops - 1) + " steps";
    q.question = std::string("what is the ") + detail::attributes()[attr].noun + " of the place " +
                 detail::relations()[rel].question + " " + chain.front() + steps + " ?";
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace pathfid

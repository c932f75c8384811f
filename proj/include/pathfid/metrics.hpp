#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathfid/corpus.hpp"
#include "pathfid/error.hpp"
#include "pathfid/hoporder.hpp"
#include "pathfid/pathcodec.hpp"
#include "pathfid/text.hpp"

namespace pathfid {

struct Score {
  double em = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// SQuAD-style EM/F1 on normalized answers. Two answers that both
/// normalize to empty score (1, 1).
inline Score answer_scores(std::string_view pred, std::string_view gold) {
  Tokens p = normalized_tokens(pred);
  Tokens g = normalized_tokens(gold);
  Score s;
  s.em = p == g ? 1.0 : 0.0;
  if (p.empty() && g.empty()) return {1.0, 1.0, 1.0, 1.0};
  if (p.empty() || g.empty()) return s;
  std::map<std::string_view, int> counts;
  for (const auto& t : g) ++counts[t];
  int overlap = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return s;
  s.precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  s.recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

/// Set EM/F1 over exact (title, sentence) pairs.
inline Score support_scores(const SupportSet& pred, const SupportSet& gold) {
  if (pred.empty() && gold.empty()) return {1.0, 1.0, 1.0, 1.0};
  std::size_t tp = 0;
  for (const auto& f : pred) tp += gold.count(f);
  std::size_t fp = pred.size() - tp;
  std::size_t fn = gold.size() - tp;
  Score s;
  s.em = (fp == 0 && fn == 0) ? 1.0 : 0.0;
  s.precision = pred.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred.size());
  s.recall = gold.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold.size());
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

/// Product-style joint score of the official HotpotQA evaluation.
inline Score joint_scores(const Score& ans, const Score& sp) {
  Score j;
  j.precision = ans.precision * sp.precision;
  j.recall = ans.recall * sp.recall;
  j.em = ans.em * sp.em;
  if (j.precision + j.recall > 0.0) j.f1 = 2.0 * j.precision * j.recall / (j.precision + j.recall);
  return j;
}

struct Prediction {
  std::string instance_id;
  std::optional<std::string> answer;
  std::optional<SupportSet> supports;
  std::optional<ReasoningPath> raw_path;
};

/// Supports implied by a path: hop title plus 0-based sentence index.
inline SupportSet supports_from_path(const ReasoningPath& p) {
  SupportSet out;
  for (const auto& h : p.hops)
    for (int j : h.facts) out.insert({h.title, j - 1});
  return out;
}

enum class Grounding {
  pred_in_gold_passages,
  pred_in_gold_supports,
  gold_in_pred_passages,
  gold_in_pred_supports,
  pred_in_pred_passages,
  pred_in_pred_supports,
};

inline constexpr std::array<Grounding, 6> kAllGroundings{
    Grounding::pred_in_gold_passages, Grounding::pred_in_gold_supports, Grounding::gold_in_pred_passages,
    Grounding::gold_in_pred_supports, Grounding::pred_in_pred_passages, Grounding::pred_in_pred_supports};

inline std::string to_string(Grounding g) {
  switch (g) {
    case Grounding::pred_in_gold_passages: return "Pred Answer Grounded in Gold Passages";
    case Grounding::pred_in_gold_supports: return "Pred Answer Grounded in Gold Supports";
    case Grounding::gold_in_pred_passages: return "Gold Answer Grounded in Pred Passages";
    case Grounding::gold_in_pred_supports: return "Gold Answer Grounded in Pred Supports";
    case Grounding::pred_in_pred_passages: return "Pred Answer Grounded in Pred Passages";
    case Grounding::pred_in_pred_supports: return "Pred Answer Grounded in Pred Supports";
  }
  return "";
}

struct EvalOptions {
  bool score_answers = true;
  bool score_supports = true;
  PathSchema schema = PathSchema::full;
};

struct BreakdownCell {
  std::string question_type;
  std::string supports;  // "<2", "2", "3", "4", ">=5"
  int count = 0;
  std::optional<double> answer_em;
  std::optional<double> support_em;
};

/// Index 0 holds support-F1 == 0; index n in 1..10 holds (0.1(n-1), 0.1n].
struct Bucket {
  int index = 0;
  int count = 0;
  double answer_em = 0.0;
  double answer_f1 = 0.0;
};

struct GroundednessRow {
  Grounding kind;
  std::optional<double> percentage;
};

struct SegmentSummary {
  std::vector<std::pair<std::string, double>> rates;  // T1, F1, T2, F2, ..., Answer
  double path_em = 0.0;
  int instances = 0;
  std::optional<double> comparison_any_order_em;
};

struct EvalReport {
  int num_instances = 0;
  std::optional<Score> answer;
  std::optional<Score> support;
  std::optional<Score> joint;
  std::vector<BreakdownCell> breakdown;
  std::vector<GroundednessRow> groundedness;
  std::map<std::string, std::vector<Bucket>> buckets;  // by "all" and question type
  std::optional<SegmentSummary> segments;
  std::vector<std::string> diagnostics;
};

inline int support_bucket(double f1) {
  if (f1 <= 0.0) return 0;
  int n = static_cast<int>(std::ceil(f1 * 10.0 - 1e-9));
  return std::clamp(n, 1, 10);
}

inline std::string support_count_label(std::size_t n) {
  if (n < 2) return "<2";
  if (n >= 5) return ">=5";
  return std::to_string(n);
}

namespace detail {

inline Tokens passage_tokens(const Passage& p) {
  std::string text = p.title;
  for (const auto& s : p.sentences) text += " " + s;
  return normalized_tokens(text);
}

inline bool grounded_in(std::string_view answer, const std::vector<Tokens>& units) {
  Tokens needle = normalized_tokens(answer);
  for (const auto& u : units)
    if (contains_token_run(u, needle)) return true;
  return false;
}

inline std::vector<Tokens> passage_units(const QuestionInstance& q, const std::set<std::string>& titles) {
  std::vector<Tokens> out;
  for (const auto& p : q.passages)
    if (titles.count(p.title)) out.push_back(passage_tokens(p));
  return out;
}

inline std::vector<Tokens> sentence_units(const QuestionInstance& q, const SupportSet& supports) {
  std::vector<Tokens> out;
  for (const auto& sf : supports) {
    const Passage* p = q.find(sf.title);
    if (p && sf.sentence >= 0 && sf.sentence < static_cast<int>(p->sentences.size()))
      out.push_back(normalized_tokens(p->sentences[static_cast<std::size_t>(sf.sentence)]));
  }
  return out;
}

inline std::set<std::string> predicted_titles(const Prediction& p) {
  std::set<std::string> out;
  if (p.raw_path)
    for (const auto& h : p.raw_path->hops) out.insert(h.title);
  if (p.supports)
    for (const auto& sf : *p.supports) out.insert(sf.title);
  return out;
}

inline std::map<std::string, const Prediction*> index_predictions(const std::vector<Prediction>& preds,
                                                                 const std::vector<QuestionInstance>& gold) {
  std::set<std::string> known;
  for (const auto& q : gold) known.insert(q.id);
  std::map<std::string, const Prediction*> by_id;
  std::vector<std::string> unknown;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.instance_id, &p).second)
      throw Error("metrics", "duplicate prediction id '" + p.instance_id + "'");
    if (!known.count(p.instance_id)) unknown.push_back(p.instance_id);
  }
  if (!unknown.empty()) throw Error("metrics", "predictions reference unknown ids: " + join(unknown, ", "));
  return by_id;
}

}  // namespace detail

/// Ids in `preds` that are absent from `gold`.
inline std::vector<std::string> unknown_prediction_ids(const std::vector<Prediction>& preds,
                                                       const std::vector<QuestionInstance>& gold) {
  std::set<std::string> known;
  for (const auto& q : gold) known.insert(q.id);
  std::vector<std::string> out;
  for (const auto& p : preds)
    if (!known.count(p.instance_id)) out.push_back(p.instance_id);
  return out;
}

/// Percentage of instances whose probe answer occurs, as a contiguous run
/// of normalized tokens, inside one unit of the probe text. Undefined when
/// the row needs something the predictions do not carry.
inline std::optional<double> groundedness_row(Grounding kind, const std::vector<Prediction>& preds,
                                              const std::vector<QuestionInstance>& gold,
                                              const EvalOptions& opts = {}) {
  bool uses_pred_answer = kind != Grounding::gold_in_pred_passages && kind != Grounding::gold_in_pred_supports;
  bool uses_pred_evidence = kind != Grounding::pred_in_gold_passages && kind != Grounding::pred_in_gold_supports;
  if (uses_pred_answer && !opts.score_answers) return std::nullopt;
  if (uses_pred_evidence && !opts.score_supports) return std::nullopt;
  if (gold.empty()) return std::nullopt;

  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) by_id.emplace(p.instance_id, &p);
  int hits = 0;
  for (const auto& q : gold) {
    auto it = by_id.find(q.id);
    if (it == by_id.end()) continue;
    const Prediction& p = *it->second;
    std::string probe = uses_pred_answer ? p.answer.value_or("") : q.answer;
    std::vector<Tokens> units;
    SupportSet pred_supports = p.supports.value_or(SupportSet{});
    switch (kind) {
      case Grounding::pred_in_gold_passages: units = detail::passage_units(q, q.gold_passage_titles); break;
      case Grounding::pred_in_gold_supports: units = detail::sentence_units(q, q.gold_supports); break;
      case Grounding::gold_in_pred_passages:
      case Grounding::pred_in_pred_passages: units = detail::passage_units(q, detail::predicted_titles(p)); break;
      case Grounding::gold_in_pred_supports:
      case Grounding::pred_in_pred_supports: units = detail::sentence_units(q, pred_supports); break;
    }
    if (detail::grounded_in(probe, units)) ++hits;
  }
  return 100.0 * hits / static_cast<double>(gold.size());
}

/// Macro-averaged answer and support metrics plus the breakdown,
/// groundedness, bucket and segment analyses. Gold instances without a
/// prediction score zero.
inline EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<QuestionInstance>& gold,
                           const EvalOptions& opts = {}) {
  auto by_id = detail::index_predictions(preds, gold);
  EvalReport r;
  r.num_instances = static_cast<int>(gold.size());

  struct Row {
    const QuestionInstance* q;
    Score ans;
    Score sp;
  };
  std::vector<Row> rows;
  Score ans_sum, sp_sum, joint_sum;
  for (const auto& q : gold) {
    auto it = by_id.find(q.id);
    const Prediction* p = it == by_id.end() ? nullptr : it->second;
    if (!p) r.diagnostics.push_back("missing prediction for '" + q.id + "'");
    Row row{&q, {}, {}};
    if (opts.score_answers) {
      if (p && p->answer) row.ans = answer_scores(*p->answer, q.answer);
      ans_sum.em += row.ans.em;
      ans_sum.f1 += row.ans.f1;
    }
    if (opts.score_supports) {
      if (p) row.sp = support_scores(p->supports.value_or(SupportSet{}), q.gold_supports);
      sp_sum.em += row.sp.em;
      sp_sum.f1 += row.sp.f1;
    }
    if (opts.score_answers && opts.score_supports) {
      Score j = joint_scores(row.ans, row.sp);
      joint_sum.em += j.em;
      joint_sum.f1 += j.f1;
    }
    rows.push_back(row);
  }

  const double n = gold.empty() ? 1.0 : static_cast<double>(gold.size());
  auto mean = [&](const Score& s) { return Score{s.em / n, s.f1 / n, 0.0, 0.0}; };
  if (opts.score_answers) r.answer = mean(ans_sum);
  if (opts.score_supports) r.support = mean(sp_sum);
  if (opts.score_answers && opts.score_supports) r.joint = mean(joint_sum);

  // Breakdown by question type and number of gold supporting facts.
  std::map<std::pair<std::string, std::string>, std::array<double, 3>> cells;
  for (const auto& row : rows) {
    auto& c = cells[{to_string(row.q->type), support_count_label(row.q->gold_supports.size())}];
    c[0] += 1;
    c[1] += row.ans.em;
    c[2] += row.sp.em;
  }
  for (const auto& [key, c] : cells) {
    BreakdownCell cell;
    cell.question_type = key.first;
    cell.supports = key.second;
    cell.count = static_cast<int>(c[0]);
    if (opts.score_answers) cell.answer_em = c[1] / c[0];
    if (opts.score_supports) cell.support_em = c[2] / c[0];
    r.breakdown.push_back(cell);
  }

  for (auto g : kAllGroundings) r.groundedness.push_back({g, groundedness_row(g, preds, gold, opts)});

  if (opts.score_supports) {
    auto empty_buckets = [] {
      std::vector<Bucket> b(11);
      for (int i = 0; i < 11; ++i) b[static_cast<std::size_t>(i)].index = i;
      return b;
    };
    for (const auto& row : rows) {
      int idx = support_bucket(row.sp.f1);
      for (const std::string& group : {std::string("all"), to_string(row.q->type)}) {
        auto [it, fresh] = r.buckets.try_emplace(group);
        if (fresh) it->second = empty_buckets();
        auto& b = it->second[static_cast<std::size_t>(idx)];
        b.count += 1;
        b.answer_em += row.ans.em;
        b.answer_f1 += row.ans.f1;
      }
    }
    for (auto& [group, bs] : r.buckets)
      for (auto& b : bs)
        if (b.count > 0) {
          b.answer_em /= b.count;
          b.answer_f1 /= b.count;
        }
  }

  // Segment EM over instances whose prediction kept its parsed path.
  bool any_path = std::any_of(preds.begin(), preds.end(), [](const Prediction& p) { return p.raw_path.has_value(); });
  if (any_path) {
    SegmentSummary s;
    std::map<std::string, std::pair<double, double>> acc;
    std::vector<std::string> order;
    double all = 0.0, cmp_total = 0.0, cmp_hits = 0.0;
    for (const auto& q : gold) {
      auto it = by_id.find(q.id);
      ReasoningPath pred;
      if (it != by_id.end() && it->second->raw_path) pred = *it->second->raw_path;
      ReasoningPath g = restrict_to(gold_path(q), opts.schema);
      SegmentFlags f = path_segment_em(pred, g, opts.schema);
      for (const auto& [name, ok] : f.named()) {
        if (!acc.count(name)) order.push_back(name);
        acc[name].first += ok ? 1.0 : 0.0;
        acc[name].second += 1.0;
      }
      all += f.all() ? 1.0 : 0.0;
      if (q.type == QuestionType::comparison) {
        cmp_total += 1.0;
        cmp_hits += path_segment_em_any_order(pred, g, opts.schema).all() ? 1.0 : 0.0;
      }
    }
    // Keep T1, F1, T2, F2, ..., Answer ordering.
    std::stable_sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
      auto rank = [](const std::string& s) {
        if (s == "Answer") return 1 << 20;
        int k = std::stoi(s.substr(1));
        return 2 * k + (s[0] == 'F' ? 1 : 0);
      };
      return rank(a) < rank(b);
    });
    for (const auto& name : order) s.rates.emplace_back(name, acc[name].first / acc[name].second);
    s.instances = static_cast<int>(gold.size());
    s.path_em = all / n;
    if (cmp_total > 0) s.comparison_any_order_em = cmp_hits / cmp_total;
    r.segments = s;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Rendering

inline nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  auto score = [](const std::optional<Score>& s) -> json {
    if (!s) return nullptr;
    return json{{"em", s->em}, {"f1", s->f1}};
  };
  auto opt = [](const std::optional<double>& v) -> json { return v ? json(*v) : json(nullptr); };
  json j;
  j["num_instances"] = r.num_instances;
  j["answer"] = score(r.answer);
  j["support"] = score(r.support);
  j["joint"] = score(r.joint);
  if (r.answer) {
    j["answer_em"] = r.answer->em;
    j["answer_f1"] = r.answer->f1;
  }
  if (r.support) {
    j["support_em"] = r.support->em;
    j["support_f1"] = r.support->f1;
  }
  if (r.joint) {
    j["joint_em"] = r.joint->em;
    j["joint_f1"] = r.joint->f1;
  }
  json bd = json::array();
  for (const auto& c : r.breakdown)
    bd.push_back({{"question_type", c.question_type},
                  {"supports", c.supports},
                  {"count", c.count},
                  {"answer_em", opt(c.answer_em)},
                  {"support_em", opt(c.support_em)}});
  j["breakdown"] = bd;
  json gr = json::array();
  for (const auto& g : r.groundedness) gr.push_back({{"row", to_string(g.kind)}, {"percentage", opt(g.percentage)}});
  j["groundedness"] = gr;
  json bk = json::object();
  for (const auto& [group, bs] : r.buckets) {
    json arr = json::array();
    for (const auto& b : bs)
      arr.push_back({{"bucket", b.index}, {"count", b.count}, {"answer_em", b.answer_em}, {"answer_f1", b.answer_f1}});
    bk[group] = arr;
  }
  j["buckets"] = bk;
  if (r.segments) {
    json seg;
    for (const auto& [name, rate] : r.segments->rates) seg[name] = rate;
    seg["path_em"] = r.segments->path_em;
    seg["comparison_any_order_em"] = opt(r.segments->comparison_any_order_em);
    j["segments"] = seg;
  } else {
    j["segments"] = nullptr;
  }
  j["diagnostics"] = r.diagnostics;
  return j;
}

namespace detail {

inline std::string pct(std::optional<double> v, bool already_percent = false) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << (already_percent ? *v : 100.0 * *v);
  return os.str();
}

}  // namespace detail

inline std::string render_text(const EvalReport& r) {
  std::ostringstream os;
  auto opt_em = [](const std::optional<Score>& s) { return s ? std::optional<double>(s->em) : std::nullopt; };
  auto opt_f1 = [](const std::optional<Score>& s) { return s ? std::optional<double>(s->f1) : std::nullopt; };
  os << "instances: " << r.num_instances << "\n\n";
  os << std::left << std::setw(10) << "" << std::setw(8) << "EM" << "F1\n";
  os << std::setw(10) << "answer" << std::setw(8) << detail::pct(opt_em(r.answer)) << detail::pct(opt_f1(r.answer)) << "\n";
  os << std::setw(10) << "support" << std::setw(8) << detail::pct(opt_em(r.support)) << detail::pct(opt_f1(r.support))
     << "\n";
  os << std::setw(10) << "joint" << std::setw(8) << detail::pct(opt_em(r.joint)) << detail::pct(opt_f1(r.joint)) << "\n\n";

  os << "breakdown (type, #supports): count answer-EM support-EM\n";
  for (const auto& c : r.breakdown)
    os << "  " << std::setw(11) << c.question_type << std::setw(5) << c.supports << std::setw(7) << c.count
       << std::setw(10) << detail::pct(c.answer_em) << detail::pct(c.support_em) << "\n";

  os << "\ngroundedness\n";
  for (const auto& g : r.groundedness)
    os << "  " << std::setw(40) << to_string(g.kind) << detail::pct(g.percentage, true) << "\n";

  for (const auto& [group, bs] : r.buckets) {
    os << "\nsupport-F1 buckets (" << group << "): bucket count answer-EM answer-F1\n";
    for (const auto& b : bs)
      if (b.count > 0)
        os << "  " << std::setw(4) << b.index << std::setw(7) << b.count << std::setw(10) << detail::pct(b.answer_em)
           << detail::pct(b.answer_f1) << "\n";
  }
  if (r.segments) {
    os << "\nsegment EM:";
    for (const auto& [name, rate] : r.segments->rates) os << " " << name << "=" << detail::pct(rate);
    os << " path=" << detail::pct(r.segments->path_em) << "\n";
  }
  return os.str();
}

inline std::string render_breakdown_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "question_type,supports,count,answer_em,support_em\n";
  auto cell = [](const std::optional<double>& v) {
    std::ostringstream o;
    if (v) o << std::setprecision(17) << *v;
    return o.str();
  };
  for (const auto& c : r.breakdown)
    os << c.question_type << "," << c.supports << "," << c.count << "," << cell(c.answer_em) << ","
       << cell(c.support_em) << "\n";
  return os.str();
}

inline std::string render_buckets_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "group,bucket,count,answer_em,answer_f1\n" << std::setprecision(17);
  for (const auto& [group, bs] : r.buckets)
    for (const auto& b : bs) os << group << "," << b.index << "," << b.count << "," << b.answer_em << "," << b.answer_f1 << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Official HotpotQA prediction format: {"answer": {id: str}, "sp": {id: [[title, idx]]}}

struct OfficialPredictions {
  std::vector<Prediction> predictions;
  bool has_answers = false;
  bool has_supports = false;
};

inline OfficialPredictions parse_official_predictions(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error("metrics", "prediction file must be a JSON object");
  OfficialPredictions out;
  std::map<std::string, Prediction> by_id;
  if (auto it = doc.find("answer"); it != doc.end()) {
    if (!it->is_object()) throw Error("metrics", "'answer' must map ids to strings");
    out.has_answers = true;
    for (auto a = it->begin(); a != it->end(); ++a) {
      if (!a.value().is_string()) throw Error("metrics", "answer for '" + a.key() + "' is not a string");
      auto& p = by_id[a.key()];
      p.instance_id = a.key();
      p.answer = a.value().get<std::string>();
    }
  }
  if (auto it = doc.find("sp"); it != doc.end()) {
    if (!it->is_object()) throw Error("metrics", "'sp' must map ids to fact lists");
    out.has_supports = true;
    for (auto s = it->begin(); s != it->end(); ++s) {
      if (!s.value().is_array()) throw Error("metrics", "sp for '" + s.key() + "' is not an array");
      auto& p = by_id[s.key()];
      p.instance_id = s.key();
      SupportSet set;
      for (const auto& f : s.value()) {
        if (!f.is_array() || f.size() != 2 || !f[0].is_string() || !f[1].is_number_integer())
          throw Error("metrics", "sp entry for '" + s.key() + "' is not [title, sent_id]");
        set.insert({f[0].get<std::string>(), f[1].get<int>()});
      }
      p.supports = std::move(set);
    }
  }
  for (auto& [id, p] : by_id) out.predictions.push_back(std::move(p));
  return out;
}

inline nlohmann::json to_official_json(const std::vector<Prediction>& preds, bool answers = true, bool supports = true) {
  nlohmann::json ans = nlohmann::json::object();
  nlohmann::json sp = nlohmann::json::object();
  for (const auto& p : preds) {
    if (answers) ans[p.instance_id] = p.answer.value_or("");
    if (supports) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& f : p.supports.value_or(SupportSet{})) arr.push_back(nlohmann::json::array({f.title, f.sentence}));
      sp[p.instance_id] = arr;
    }
  }
  nlohmann::json out = nlohmann::json::object();
  if (answers) out["answer"] = ans;
  if (supports) out["sp"] = sp;
  return out;
}

}  // namespace pathfid

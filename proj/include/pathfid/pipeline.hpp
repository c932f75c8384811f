#pragma once

#include <algorithm>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathfid/blocks.hpp"
#include "pathfid/corpus.hpp"
#include "pathfid/hoporder.hpp"
#include "pathfid/metrics.hpp"
#include "pathfid/pathcodec.hpp"
#include "pathfid/minifid/checkpoint.hpp"
#include "pathfid/minifid/model.hpp"
#include "pathfid/minifid/train.hpp"

namespace pathfid {

struct PipelineConfig {
  Mode mode = Mode::pathfid;
  PathSchema schema = PathSchema::full;
  minifid::ModelConfig model;
  minifid::TrainHparams hparams;
};

inline minifid::TargetKind target_kind(Mode m) {
  return m == Mode::fid ? minifid::TargetKind::answer_only : minifid::TargetKind::path;
}

/// Decoder target: answer tokens for fid, otherwise the linearized gold
/// path cut to `max_len` with the answer segment kept intact.
inline Tokens target_tokens(const QuestionInstance& q, Mode mode, PathSchema schema, int max_len,
                            const LinkGraph& links = {}) {
  if (mode == Mode::fid) {
    Tokens t = split_whitespace(q.answer);
    if (static_cast<int>(t.size()) > max_len) t.resize(static_cast<std::size_t>(max_len));
    return t;
  }
  return truncate_target(linearize(restrict_to(gold_path(q, links), schema), schema), max_len);
}

/// Vocabulary over every block and target token of the corpus.
inline minifid::Tokenizer build_tokenizer(const std::vector<QuestionInstance>& corpus) {
  minifid::Tokenizer tok;
  for (const auto& q : corpus) {
    for (const auto& t : split_whitespace(q.question)) tok.add(t);
    for (const auto& t : split_whitespace(q.answer)) tok.add(t);
    for (const auto& p : q.passages) {
      for (const auto& t : split_whitespace(p.title)) tok.add(t);
      for (const auto& s : p.sentences)
        for (const auto& t : split_whitespace(s)) tok.add(t);
    }
  }
  return tok;
}

inline std::vector<minifid::TokenIds> encode_blocks_ids(const minifid::Tokenizer& tok,
                                                        const std::vector<InputBlock>& blocks) {
  std::vector<minifid::TokenIds> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(tok.encode(b.tokens));
  return out;
}

/// First hop p* for the pair blocks: the gold path's first passage.
inline std::string gold_first_hop(const QuestionInstance& q) {
  ReasoningPath g = gold_path(q);
  if (!g.hops.empty()) return g.hops.front().title;
  return q.passages.front().title;
}

inline minifid::TrainExample make_example(const QuestionInstance& q, const PipelineConfig& cfg,
                                          const minifid::Tokenizer& tok,
                                          const std::optional<std::string>& p_star = std::nullopt) {
  minifid::TrainExample ex;
  ex.instance_id = q.id;
  BlockKind kind = cfg.mode == Mode::fid ? BlockKind::fid
                   : cfg.mode == Mode::pathfid ? BlockKind::path
                                               : BlockKind::path_plus;
  int max_len = std::min(default_max_len(kind), cfg.model.max_input_block_len);
  ex.blocks = encode_blocks_ids(tok, build_instance_blocks(q, cfg.mode, p_star, max_len));
  ex.target = tok.encode(target_tokens(q, cfg.mode, cfg.schema, cfg.model.max_target_len));
  if (cfg.mode == Mode::fid) {
    ex.gold.answer = q.answer;
  } else {
    ex.gold = restrict_to(gold_path(q), cfg.schema);
  }
  ex.candidates = q.titles();
  return ex;
}

/// One line of the prediction dump.
struct PredictionRecord {
  std::string instance_id;
  std::string raw_sequence;
  ReasoningPath parsed;
  std::vector<std::string> diagnostics;
};

inline nlohmann::json path_to_json(const ReasoningPath& p) {
  nlohmann::json hops = nlohmann::json::array();
  for (const auto& h : p.hops) hops.push_back({{"title", h.title}, {"facts", h.facts}});
  return {{"hops", hops}, {"answer", p.answer ? nlohmann::json(*p.answer) : nlohmann::json(nullptr)}};
}

inline ReasoningPath path_from_json(const nlohmann::json& j) {
  ReasoningPath p;
  for (const auto& h : j.at("hops")) p.hops.push_back({h.at("title").get<std::string>(), h.at("facts").get<std::vector<int>>()});
  if (j.contains("answer") && j["answer"].is_string()) p.answer = j["answer"].get<std::string>();
  return p;
}

inline nlohmann::json to_json(const PredictionRecord& r) {
  return {{"instance_id", r.instance_id},
          {"raw_sequence", r.raw_sequence},
          {"parsed", path_to_json(r.parsed)},
          {"diagnostics", r.diagnostics}};
}

inline PredictionRecord prediction_record_from_json(const nlohmann::json& j) {
  PredictionRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.raw_sequence = j.value("raw_sequence", "");
  r.parsed = path_from_json(j.at("parsed"));
  r.diagnostics = j.value("diagnostics", std::vector<std::string>{});
  return r;
}

inline std::string to_jsonl(const std::vector<PredictionRecord>& recs) {
  std::string out;
  for (const auto& r : recs) out += to_json(r).dump() + "\n";
  return out;
}

/// Prediction for scoring from a dump record under a mode/schema.
inline Prediction to_prediction(const PredictionRecord& r, Mode mode, PathSchema schema) {
  Prediction p;
  p.instance_id = r.instance_id;
  if (mode == Mode::fid || schema_has_answer(schema)) p.answer = r.parsed.answer.value_or("");
  if (mode != Mode::fid) {
    p.raw_path = r.parsed;
    if (schema_has_facts(schema)) p.supports = supports_from_path(r.parsed);
  }
  return p;
}

inline EvalOptions eval_options(Mode mode, PathSchema schema) {
  EvalOptions o;
  o.schema = schema;
  o.score_answers = mode == Mode::fid || schema_has_answer(schema);
  o.score_supports = mode != Mode::fid && schema_has_facts(schema);
  return o;
}

struct PipelineResult {
  std::vector<PredictionRecord> records;
  std::vector<Prediction> predictions;
  EvalReport report;
  minifid::Checkpoint checkpoint;
  minifid::TrainResult training;
  std::optional<minifid::TrainResult> first_stage;  // PathFid run that picks p* for pathfid_plus
  std::vector<std::string> p_star;                  // per evaluated instance, pathfid_plus only
};

/// Decodes every instance with a trained model.
inline std::vector<PredictionRecord> predict(const minifid::Checkpoint& ck, const std::vector<QuestionInstance>& corpus,
                                             const PipelineConfig& cfg,
                                             const std::vector<std::string>* p_stars = nullptr) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& q = corpus[i];
    std::optional<std::string> star;
    if (p_stars) star = (*p_stars)[i];
    minifid::TrainExample ex = make_example(q, cfg, ck.tokenizer, star);
    auto d = minifid::decode_prediction(ck.config, ck.params, ck.tokenizer, ex.blocks, target_kind(cfg.mode), cfg.schema,
                                        ex.candidates);
    out.push_back({q.id, join(d.raw_tokens), d.parsed.path, d.parsed.diagnostics});
  }
  return out;
}

using ProgressFn = std::function<void(const std::string& stage, const minifid::EvalSnapshot&)>;

inline minifid::Checkpoint train_model(const std::vector<QuestionInstance>& corpus, const PipelineConfig& cfg,
                                       const minifid::Tokenizer& tok, minifid::TrainResult& result,
                                       const std::string& stage, const ProgressFn& progress,
                                       const std::vector<std::string>* p_stars = nullptr) {
  std::vector<minifid::TrainExample> examples;
  examples.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::optional<std::string> star;
    if (p_stars) star = (*p_stars)[i];
    examples.push_back(make_example(corpus[i], cfg, tok, star));
  }
  minifid::Checkpoint ck;
  ck.config = cfg.model;
  ck.config.vocab_size = tok.size();
  ck.tokenizer = tok;
  auto on_eval = [&](const minifid::EvalSnapshot& s) {
    if (progress) progress(stage, s);
  };
  result = minifid::train(ck.config, minifid::init_params(ck.config), tok, examples, target_kind(cfg.mode), cfg.schema,
                          cfg.hparams, on_eval);
  ck.params = result.params;
  return ck;
}

/// Builds blocks per mode, trains, decodes, parses, reconstructs titles and
/// evaluates on `eval` (the training corpus when absent). pathfid_plus first
/// trains a PathFid model whose predicted first hop becomes p* at
/// inference; training pairs use the gold first hop.
inline PipelineResult run_pipeline(const std::vector<QuestionInstance>& corpus, PipelineConfig cfg,
                                   const std::vector<QuestionInstance>* eval = nullptr,
                                   const ProgressFn& progress = nullptr) {
  if (corpus.empty()) throw Error("pipeline", "training corpus is empty");
  const auto& eval_set = eval ? *eval : corpus;
  BlockKind kind = cfg.mode == Mode::fid ? BlockKind::fid
                   : cfg.mode == Mode::pathfid ? BlockKind::path
                                               : BlockKind::path_plus;
  cfg.model.max_input_block_len = default_max_len(kind);

  std::vector<QuestionInstance> vocab_source = corpus;
  if (eval) vocab_source.insert(vocab_source.end(), eval->begin(), eval->end());
  minifid::Tokenizer tok = build_tokenizer(vocab_source);

  PipelineResult out;
  if (cfg.mode == Mode::pathfid_plus) {
    PipelineConfig first = cfg;
    first.mode = Mode::pathfid;
    first.schema = PathSchema::full;
    first.model.max_input_block_len = kDefaultBlockLen;
    minifid::TrainResult first_result;
    minifid::Checkpoint first_ck = train_model(corpus, first, tok, first_result, "pathfid (p*)", progress);
    out.first_stage = first_result;
    for (const auto& rec : predict(first_ck, eval_set, first)) {
      const QuestionInstance* q = nullptr;
      for (const auto& c : eval_set)
        if (c.id == rec.instance_id) q = &c;
      out.p_star.push_back(!rec.parsed.hops.empty() ? rec.parsed.hops.front().title : q->passages.front().title);
    }
    std::vector<std::string> gold_stars;
    for (const auto& q : corpus) gold_stars.push_back(gold_first_hop(q));
    out.checkpoint = train_model(corpus, cfg, tok, out.training, to_string(cfg.mode), progress, &gold_stars);
    out.records = predict(out.checkpoint, eval_set, cfg, &out.p_star);
  } else {
    out.checkpoint = train_model(corpus, cfg, tok, out.training, to_string(cfg.mode), progress);
    out.records = predict(out.checkpoint, eval_set, cfg);
  }
  for (const auto& r : out.records) out.predictions.push_back(to_prediction(r, cfg.mode, cfg.schema));
  out.report = evaluate(out.predictions, eval_set, eval_options(cfg.mode, cfg.schema));
  return out;
}

/// Training trace as CSV: one row per evaluation with per-segment EM.
inline std::string trace_csv(const std::vector<minifid::EvalSnapshot>& trace) {
  std::ostringstream os;
  os << std::setprecision(17);
  std::vector<std::string> names;
  if (!trace.empty())
    for (const auto& [n, _] : trace.front().segments) names.push_back(n);
  os << "step,train_loss";
  for (const auto& n : names) os << "," << n;
  os << ",path_em\n";
  for (const auto& s : trace) {
    os << s.step << "," << s.train_loss;
    for (const auto& n : names) {
      double v = 0.0;
      for (const auto& [m, r] : s.segments)
        if (m == n) v = r;
      os << "," << v;
    }
    os << "," << s.path_em << "\n";
  }
  return os.str();
}

}  // namespace pathfid

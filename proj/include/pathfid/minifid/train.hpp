#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pathfid/error.hpp"
#include "pathfid/pathcodec.hpp"
#include "pathfid/rng.hpp"
#include "pathfid/minifid/model.hpp"
#include "pathfid/minifid/tokenizer.hpp"

namespace pathfid::minifid {

/// What the decoder is trained to emit.
enum class TargetKind { answer_only, path };

struct TrainExample {
  std::string instance_id;
  std::vector<TokenIds> blocks;
  TokenIds target;
  ReasoningPath gold;                   // already restricted to the schema
  std::vector<std::string> candidates;  // input titles, for title reconstruction
};

struct TrainHparams {
  int steps = 5000;
  int batch_size = 1;
  double learning_rate = 1e-2;
  double clip_norm = 1.0;
  int eval_every = 500;
  std::uint64_t seed = 1;
  bool stop_when_perfect = true;
  double divergence_threshold = 1e6;
};

struct EvalSnapshot {
  int step = 0;
  double train_loss = 0.0;
  std::optional<double> answer_em;
  std::vector<std::pair<std::string, double>> segments;  // T1, F1, T2, F2, ..., Answer
  double path_em = 0.0;
};

struct TrainResult {
  ModelParams params;  // best checkpoint
  int best_step = 0;
  int steps_run = 0;
  double final_loss = 0.0;
  std::vector<EvalSnapshot> trace;
};

struct DecodedPrediction {
  TokenIds raw_ids;
  Tokens raw_tokens;
  ParsedPath parsed;  // titles reconstructed against the candidates
};

/// Greedy decode, then parse and snap titles to the candidates. Answer-only
/// targets become a path with no hops.
inline DecodedPrediction decode_prediction(const ModelConfig& cfg, const ModelParams& p, const Tokenizer& tok,
                                           const std::vector<TokenIds>& blocks, TargetKind kind, PathSchema schema,
                                           const std::vector<std::string>& candidates) {
  DecodedPrediction out;
  FusedRepresentation x = encode_blocks(cfg, p, blocks);
  out.raw_ids = decode_greedy(cfg, p, x, cfg.max_target_len + 1);
  out.raw_tokens = tok.decode(out.raw_ids);
  if (kind == TargetKind::answer_only) {
    out.parsed.path.answer = join(out.raw_tokens);
    return out;
  }
  ParsedPath parsed = parse(out.raw_tokens, schema);
  ParsedPath fixed = reconstruct_titles(std::move(parsed.path), candidates);
  out.parsed.path = std::move(fixed.path);
  out.parsed.diagnostics = std::move(parsed.diagnostics);
  out.parsed.diagnostics.insert(out.parsed.diagnostics.end(), fixed.diagnostics.begin(), fixed.diagnostics.end());
  return out;
}

/// Per-segment exact match of greedy decodes over `examples`.
inline EvalSnapshot evaluate_segments(const ModelConfig& cfg, const ModelParams& p, const Tokenizer& tok,
                                      const std::vector<TrainExample>& examples, TargetKind kind, PathSchema schema) {
  EvalSnapshot s;
  std::vector<std::string> order;
  std::map<std::string, double> hits;
  double all = 0.0;
  for (const auto& ex : examples) {
    DecodedPrediction d = decode_prediction(cfg, p, tok, ex.blocks, kind, schema, ex.candidates);
    SegmentFlags f;
    if (kind == TargetKind::answer_only) {
      f.answer = ex.gold.answer && d.parsed.path.answer &&
                 normalize_answer(*d.parsed.path.answer) == normalize_answer(*ex.gold.answer);
    } else {
      f = path_segment_em(d.parsed.path, ex.gold, schema);
    }
    for (const auto& [name, ok] : f.named()) {
      if (!hits.count(name)) order.push_back(name);
      hits[name] += ok ? 1.0 : 0.0;
    }
    all += f.all() ? 1.0 : 0.0;
  }
  const double n = examples.empty() ? 1.0 : static_cast<double>(examples.size());
  for (const auto& name : order) s.segments.emplace_back(name, hits[name] / n);
  if (hits.count("Answer")) s.answer_em = hits["Answer"] / n;
  s.path_em = all / n;
  return s;
}

namespace detail {

inline double mean_segment(const EvalSnapshot& s) {
  if (s.segments.empty()) return 0.0;
  double t = 0.0;
  for (const auto& [_, v] : s.segments) t += v;
  return t / static_cast<double>(s.segments.size());
}

// Answer EM first; path EM and mean segment EM break ties.
inline bool better(const EvalSnapshot& a, const EvalSnapshot& b) {
  double aa = a.answer_em.value_or(0.0), ba = b.answer_em.value_or(0.0);
  if (aa != ba) return aa > ba;
  if (a.path_em != b.path_em) return a.path_em > b.path_em;
  return mean_segment(a) > mean_segment(b);
}

}  // namespace detail

/// Mini-batch gradient descent with a constant learning rate and global
/// gradient-norm clipping. Every `eval_every` steps the training examples
/// are decoded and scored per segment; the best snapshot's parameters are
/// returned.
inline TrainResult train(const ModelConfig& cfg, ModelParams params, const Tokenizer& tok,
                         const std::vector<TrainExample>& examples, TargetKind kind, PathSchema schema,
                         const TrainHparams& hp,
                         const std::function<void(const EvalSnapshot&)>& on_eval = nullptr) {
  if (examples.empty()) throw Error("minifid", "training corpus is empty");
  if (hp.steps < 0 || hp.batch_size < 1 || hp.eval_every < 1 || !(hp.learning_rate > 0.0))
    throw Error("minifid", "invalid training hyperparameters");

  Rng rng(hp.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;

  TrainResult result;
  std::optional<EvalSnapshot> best;
  double loss_acc = 0.0;
  int loss_count = 0;

  auto checkpoint = [&](int step) {
    EvalSnapshot snap = evaluate_segments(cfg, params, tok, examples, kind, schema);
    snap.step = step;
    snap.train_loss = loss_count > 0 ? loss_acc / loss_count : result.final_loss;
    loss_acc = 0.0;
    loss_count = 0;
    result.trace.push_back(snap);
    if (on_eval) on_eval(snap);
    if (!best || detail::better(snap, *best)) {
      best = snap;
      result.params = params;
      result.best_step = step;
    }
    return snap.path_em >= 1.0;
  };

  Gradients grads = params.zeros_like();
  for (int step = 1; step <= hp.steps; ++step) {
    grads.set_zero();
    double batch_loss = 0.0;
    for (int b = 0; b < hp.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const TrainExample& ex = examples[order[cursor++]];
      LossAndGrads lg = loss_and_grads(cfg, params, ex.blocks, ex.target);
      batch_loss += lg.loss;
      for (auto& [name, g] : grads) g += lg.grads.at(name);
    }
    const double inv = 1.0 / hp.batch_size;
    batch_loss *= inv;
    if (!std::isfinite(batch_loss) || batch_loss > hp.divergence_threshold) {
      std::ostringstream os;
      os << "training diverged at step " << step << " (loss " << batch_loss << ")";
      for (const auto& s : result.trace) os << "; step " << s.step << " loss " << s.train_loss;
      throw Error("minifid", os.str());
    }
    double norm = std::sqrt(grads.squared_norm()) * inv;
    double scale = inv * (norm > hp.clip_norm ? hp.clip_norm / norm : 1.0);
    for (auto& [name, w] : params) w -= (hp.learning_rate * scale) * grads.at(name);

    result.final_loss = batch_loss;
    result.steps_run = step;
    loss_acc += batch_loss;
    ++loss_count;
    if (step % hp.eval_every == 0 || step == hp.steps) {
      if (checkpoint(step) && hp.stop_when_perfect) break;
    }
  }
  if (!best) checkpoint(0);
  return result;
}

}  // namespace pathfid::minifid

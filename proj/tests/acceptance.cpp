// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace pathfid;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1
Outcome codec_round_trip() {
  Rng rng(101);
  int failures = 0;
  auto t0 = Clock::now();
  for (PathSchema s : {PathSchema::titles_only, PathSchema::titles_answer, PathSchema::full})
    for (int i = 0; i < 10000; ++i) {
      ReasoningPath p = testing_support::random_path(rng, s);
      if (parse(linearize(p, s), s).path != p) ++failures;
    }
  double secs = seconds_since(t0);
  return {failures == 0 && secs < 5.0,
          std::to_string(failures) + " failures in 30000 paths, " + fmt("%.2f s", secs)};
}

// 2
Outcome codec_fixtures() {
  const char* memphis =
      "<title-1> Memphis Hustle <facts-1> <f1> <f2> <title-2> Southaven, Mississippi <facts-2> <f1> <f2> <f3> "
      "<answer> 48,982";
  const char* kiss =
      "<title-1> Kiss and Tell (1945 film) <facts-1> <f1> <title-2> Shirley Temple <facts-2> <f2> "
      "<answer> Chief of Protocol of the United States";
  ReasoningPath m{{{"Memphis Hustle", {1, 2}}, {"Southaven, Mississippi", {1, 2, 3}}}, "48,982"};
  ReasoningPath k{{{"Kiss and Tell (1945 film)", {1}}, {"Shirley Temple", {2}}},
                  "Chief of Protocol of the United States"};
  int ok = 0;
  ParsedPath pm = parse(std::string_view(memphis), PathSchema::full);
  ParsedPath pk = parse(std::string_view(kiss), PathSchema::full);
  ok += pm.path == m && pm.diagnostics.empty();
  ok += pk.path == k && pk.diagnostics.empty();
  return {ok == 2, std::to_string(ok) + "/2 fixtures exact"};
}

// 3
Outcome metric_oracle() {
  double worst = 0.0;
  for (const auto& c : oracle::metric_cases()) {
    Score a = answer_scores(c.pred_answer, c.gold_answer);
    oracle::PRF oa = oracle::answer(c.pred_answer, c.gold_answer);
    SupportSet ps, gs;
    for (const auto& [t, i] : c.pred_sp) ps.insert({t, i});
    for (const auto& [t, i] : c.gold_sp) gs.insert({t, i});
    Score s = support_scores(ps, gs);
    oracle::PRF os = oracle::support(c.pred_sp, c.gold_sp);
    for (double d : {a.em - oa.em, a.f1 - oa.f1, s.em - os.em, s.f1 - os.f1}) worst = std::max(worst, std::abs(d));
  }
  double f1 = answer_scores("Chief of Protocol of the United States", "Chief of Protocol").f1;
  double err = std::abs(f1 - 2.0 / 3.0);
  return {worst <= 1e-9 && err <= 1e-9, std::to_string(oracle::metric_cases().size()) + " cases, max diff " +
                                            fmt("%.3g", worst) + ", worked F1 " + fmt("%.12f", f1)};
}

// 4
Outcome gradient_check() {
  minifid::ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.d_model = 32;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.n_heads = 2;
  cfg.rng_seed = 17;
  auto t0 = Clock::now();
  minifid::GradCheckReport r =
      minifid::gradient_check(cfg, minifid::init_params(cfg), {{4, 5, 6}, {7, 8, 9, 10}, {11, 4}}, {5, 9, 7, 11});
  double secs = seconds_since(t0);
  std::size_t entries = 0;
  for (const auto& t : r.tensors) entries += t.entries;
  return {r.passed(1e-4) && secs < 60.0, std::to_string(r.tensors.size()) + " tensors, " + std::to_string(entries) +
                                             " entries, max rel err " + fmt("%.3g", r.max_rel_error) + ", " +
                                             fmt("%.1f s", secs)};
}

// 5
Outcome block_independence() {
  minifid::ModelConfig cfg;
  cfg.vocab_size = 40;
  cfg.d_model = 32;
  cfg.n_layers_enc = 2;
  cfg.n_layers_dec = 1;
  cfg.n_heads = 4;
  minifid::ModelParams p = minifid::init_params(cfg);
  Rng rng(55);
  auto block = [&] {
    minifid::TokenIds b(1 + rng.below(20));
    for (int& t : b) t = 4 + static_cast<int>(rng.below(36));
    return b;
  };
  int bad = 0, pair_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<minifid::TokenIds> blocks(2 + rng.below(9));
    for (auto& b : blocks) b = block();
    auto mutated = blocks;
    const std::size_t victim = rng.below(blocks.size());
    mutated[victim] = block();
    minifid::EncodeStats sa;
    auto a = minifid::encode_blocks(cfg, p, blocks, nullptr, &sa);
    auto b = minifid::encode_blocks(cfg, p, mutated);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (i == victim) continue;
      const auto len = static_cast<Eigen::Index>(blocks[i].size());
      if (!(a.rows.middleRows(a.block_boundaries[i], len) == b.rows.middleRows(b.block_boundaries[i], len))) ++bad;
    }
    long long expected = 0;
    std::vector<int> lens;
    for (const auto& bl : blocks) {
      expected += static_cast<long long>(bl.size() * bl.size());
      lens.push_back(static_cast<int>(bl.size()));
    }
    if (sa.attended_pairs != expected || minifid::BlockMask(lens).attendable_pairs() != expected) ++pair_bad;
  }
  return {bad == 0 && pair_bad == 0,
          "100 trials, " + std::to_string(bad) + " foreign row ranges changed, " + std::to_string(pair_bad) +
              " pair-count mismatches"};
}

// 6 and 10 share these runs.
struct DeskRuns {
  PipelineResult pathfid, fid;
  double pathfid_secs = 0, fid_secs = 0;
};

SyntheticConfig desk_corpus() {
  SyntheticConfig s;
  s.num_instances = 64;
  s.num_distractors = 8;
  s.rng_seed = 7;
  return s;
}

PipelineConfig desk_config(Mode mode) {
  PipelineConfig c;
  c.mode = mode;
  c.schema = PathSchema::full;
  c.model.d_model = 64;
  c.model.n_layers_enc = 2;
  c.model.n_layers_dec = 2;
  c.model.n_heads = 4;
  c.model.rng_seed = 1;
  c.hparams.steps = 5000;
  c.hparams.batch_size = 1;
  c.hparams.learning_rate = 0.1;
  c.hparams.clip_norm = 1.0;
  c.hparams.eval_every = 500;
  c.hparams.seed = 1;
  return c;
}

Outcome desk_scale(DeskRuns& runs) {
  auto corpus = generate_synthetic(desk_corpus());
  auto progress = [](const std::string& stage, const minifid::EvalSnapshot& s) {
    std::cerr << "  [" << stage << "] step " << s.step << " loss " << fmt("%.4f", s.train_loss) << " path EM "
              << fmt("%.3f", s.path_em);
    if (s.answer_em) std::cerr << " answer EM " << fmt("%.3f", *s.answer_em);
    std::cerr << "\n";
  };
  auto t0 = Clock::now();
  runs.pathfid = run_pipeline(corpus, desk_config(Mode::pathfid), nullptr, progress);
  runs.pathfid_secs = seconds_since(t0);
  t0 = Clock::now();
  runs.fid = run_pipeline(corpus, desk_config(Mode::fid), nullptr, progress);
  runs.fid_secs = seconds_since(t0);

  bool passages_ok = true;
  for (const auto& q : corpus) passages_ok = passages_ok && q.passages.size() == 10;
  const auto& seg = runs.pathfid.report.segments;
  bool path_ok = seg && seg->path_em == 1.0;
  if (seg)
    for (const auto& [_, v] : seg->rates) path_ok = path_ok && v == 1.0;
  bool fid_ok = runs.fid.report.answer && runs.fid.report.answer->em == 1.0 && !runs.fid.report.support;
  double total = runs.pathfid_secs + runs.fid_secs;
  std::string d = "pathfid path EM " + fmt("%.3f", seg ? seg->path_em : 0.0) + " at step " +
                  std::to_string(runs.pathfid.training.best_step) + " (" + fmt("%.0f s", runs.pathfid_secs) +
                  "), fid answer EM " + fmt("%.3f", runs.fid.report.answer ? runs.fid.report.answer->em : 0.0) +
                  " at step " + std::to_string(runs.fid.training.best_step) + " (" + fmt("%.0f s", runs.fid_secs) +
                  "), total " + fmt("%.0f s", total);
  return {passages_ok && path_ok && fid_ok && runs.pathfid.training.best_step <= 5000 &&
              runs.fid.training.best_step <= 5000 && total < 900.0,
          d};
}

// 7
Outcome hop_ordering() {
  auto corpus = generate_synthetic(desk_corpus());
  int last = 0;
  for (const auto& q : corpus) {
    ReasoningPath g = gold_path(q);
    const Passage* final_hop = nullptr;
    for (const auto& p : q.passages)
      if (p.title == g.hops.back().title) final_hop = &p;
    if (final_hop && passage_contains_answer(*final_hop, q.answer)) ++last;
  }
  auto memphis = testing_support::by_id(testing_support::hotpot_fixture(), "memphis-hustle");
  std::vector<std::string> order;
  for (const auto& h : gold_path(memphis).hops) order.push_back(h.title);
  bool memphis_ok = order == std::vector<std::string>{"Memphis Hustle", "Southaven, Mississippi"};
  return {last == static_cast<int>(corpus.size()) && memphis_ok,
          std::to_string(last) + "/" + std::to_string(corpus.size()) + " answer-last, Memphis order " +
              (memphis_ok ? "correct" : "wrong")};
}

// 8
Outcome parser_totality() {
  Rng rng(808);
  std::vector<std::string> pool{"<answer>", "<eos>", "<pad>", "<bos>", "<unk>", "<context-1>", "<title->", "<f0>",
                                "<f-1>",    "<facts->", "word", "Title", ",", "(1945", "48,982", "<<f1>>", "<F1>"};
  for (int k = 1; k <= kMaxHops + 1; ++k) {
    pool.push_back(title_marker(k));
    pool.push_back(facts_marker(k));
  }
  for (int j = 1; j <= kMaxFactMarkers + 1; ++j) pool.push_back(fact_marker(j));
  int failures = 0;
  const PathSchema schemas[] = {PathSchema::titles_only, PathSchema::titles_answer, PathSchema::full};
  for (int i = 0; i < 100000; ++i) {
    Tokens t(rng.below(48));
    for (auto& tok : t) tok = pool[rng.below(pool.size())];
    try {
      ParsedPath r = parse(t, schemas[i % 3]);
      if (validate_path(r.path)) ++failures;
      else if (!schema_has_answer(schemas[i % 3]) && r.path.answer) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  return {failures == 0, "100000 sequences, " + std::to_string(failures) + " failures"};
}

// 9
Outcome title_reconstruction() {
  std::vector<QuestionInstance> pool;
  for (const auto& q : testing_support::hotpot_fixture())
    if (q.passages.size() == 10) pool.push_back(q);
  for (const auto& q : generate_synthetic(desk_corpus())) pool.push_back(q);
  Rng rng(909);
  int recovered = 0, agree = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const auto& q = pool[rng.below(pool.size())];
    const std::vector<std::string> cands = q.titles();
    const std::string original = cands[rng.below(cands.size())];
    Tokens t = split_whitespace(original);
    const std::size_t at = rng.below(t.size());
    if (t.size() > 1 && rng.below(2) == 0) t.erase(t.begin() + static_cast<std::ptrdiff_t>(at));
    else t.insert(t.begin() + static_cast<std::ptrdiff_t>(at), t[at]);
    ReasoningPath p{{{join(t), {}}}, std::nullopt};
    std::string got = reconstruct_titles(p, cands).path.hops[0].title;
    recovered += got == original;
    agree += got == oracle::best_title(join(t), cands);
  }
  double rate = static_cast<double>(recovered) / trials;
  return {rate >= 0.95 && agree == trials, fmt("%.1f%% recovered", 100.0 * rate) + ", " + std::to_string(agree) + "/" +
                                               std::to_string(trials) + " agree with exhaustive argmax"};
}

// 10
Outcome analyses(const DeskRuns& runs) {
  auto corpus = generate_synthetic(desk_corpus());
  int problems = 0;
  auto check = [&](const EvalReport& r) {
    for (const auto& g : r.groundedness)
      if (g.percentage && (*g.percentage < 0.0 || *g.percentage > 100.0)) ++problems;
    for (const auto& [_, bs] : r.buckets) {
      int n = 0;
      for (const auto& b : bs) n += b.count;
      if (&bs == &r.buckets.at("all") && n != r.num_instances) ++problems;
    }
    int cells = 0;
    for (const auto& c : r.breakdown) cells += c.count;
    if (cells != r.num_instances) ++problems;
  };
  check(runs.pathfid.report);
  check(runs.fid.report);
  std::vector<Prediction> perfect;
  for (const auto& q : corpus) perfect.push_back({q.id, q.answer, q.gold_supports, gold_path(q)});
  EvalReport pr = evaluate(perfect, corpus);
  check(pr);
  int defined = 0, hundred = 0;
  for (const auto& g : pr.groundedness)
    if (g.percentage) {
      ++defined;
      hundred += *g.percentage == 100.0;
    }
  int type_sum = 0;
  for (const auto& [group, bs] : pr.buckets)
    if (group != "all")
      for (const auto& b : bs) type_sum += b.count;
  if (type_sum != pr.num_instances) ++problems;
  return {problems == 0 && defined > 0 && hundred == defined,
          std::to_string(problems) + " consistency problems, " + std::to_string(hundred) + "/" +
              std::to_string(defined) + " defined groundedness rows at 100 on perfect predictions"};
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
  DeskRuns runs;
  bool desk_done = false;
  criteria.emplace_back("codec round-trip", codec_round_trip);
  criteria.emplace_back("codec fixtures", codec_fixtures);
  criteria.emplace_back("metric oracle", metric_oracle);
  criteria.emplace_back("gradient check", gradient_check);
  criteria.emplace_back("block independence", block_independence);
  criteria.emplace_back("desk-scale end-to-end", [&] {
    desk_done = true;
    return desk_scale(runs);
  });
  criteria.emplace_back("hop ordering", hop_ordering);
  criteria.emplace_back("parser totality", parser_totality);
  criteria.emplace_back("title reconstruction", title_reconstruction);
  criteria.emplace_back("analysis consistency", [&]() -> Outcome {
    if (!desk_done) return {false, "end-to-end runs missing"};
    return analyses(runs);
  });

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

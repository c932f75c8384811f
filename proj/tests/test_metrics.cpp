#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace pathfid;

namespace {

SupportSet to_set(const std::vector<oracle::Fact>& v) {
  SupportSet s;
  for (const auto& [t, i] : v) s.insert({t, i});
  return s;
}

// Gold passages' supports and answer, as a perfect system would emit them.
Prediction perfect(const QuestionInstance& q) {
  Prediction p;
  p.instance_id = q.id;
  p.answer = q.answer;
  p.supports = q.gold_supports;
  p.raw_path = gold_path(q);
  return p;
}

}  // namespace

TEST(AnswerScores, WorkedExample) {
  Score s = answer_scores("Chief of Protocol of the United States", "Chief of Protocol");
  EXPECT_NEAR(s.f1, 2.0 / 3.0, 1e-9);
  EXPECT_EQ(s.em, 0.0);
  EXPECT_EQ(answer_scores("48,982", "48982").em, 1.0);
}

TEST(AnswerScores, MatchOracleOnFixture) {
  for (const auto& c : oracle::metric_cases()) {
    Score s = answer_scores(c.pred_answer, c.gold_answer);
    oracle::PRF o = oracle::answer(c.pred_answer, c.gold_answer);
    EXPECT_NEAR(s.em, o.em, 1e-9) << c.pred_answer << " | " << c.gold_answer;
    EXPECT_NEAR(s.f1, o.f1, 1e-9) << c.pred_answer << " | " << c.gold_answer;
  }
}

TEST(SupportScores, MatchOracleOnFixture) {
  for (const auto& c : oracle::metric_cases()) {
    Score s = support_scores(to_set(c.pred_sp), to_set(c.gold_sp));
    oracle::PRF o = oracle::support(c.pred_sp, c.gold_sp);
    EXPECT_NEAR(s.em, o.em, 1e-9);
    EXPECT_NEAR(s.f1, o.f1, 1e-9);
    EXPECT_NEAR(s.precision, o.p, 1e-9);
    EXPECT_NEAR(s.recall, o.r, 1e-9);
  }
}

TEST(SupportScores, OneMissingOfFour) {
  SupportSet gold{{"M", 0}, {"M", 1}, {"S", 0}, {"S", 2}};
  SupportSet pred{{"M", 0}, {"M", 1}, {"S", 0}};
  EXPECT_NEAR(support_scores(pred, gold).f1, 6.0 / 7.0, 1e-12);
}

TEST(JointScores, ProductOfPrecisionAndRecall) {
  Score a = answer_scores("Chief of Protocol of the United States", "Chief of Protocol");
  Score s = support_scores({{"M", 0}, {"M", 1}, {"S", 0}}, {{"M", 0}, {"M", 1}, {"S", 0}, {"S", 2}});
  Score j = joint_scores(a, s);
  const double p = a.precision * s.precision, r = a.recall * s.recall;
  EXPECT_NEAR(j.f1, 2 * p * r / (p + r), 1e-12);
  EXPECT_EQ(j.em, 0.0);
}

TEST(Evaluate, PerfectPredictionsScoreOne) {
  auto gold = testing_support::hotpot_fixture();
  std::vector<Prediction> preds;
  for (const auto& q : gold) preds.push_back(perfect(q));
  EvalReport r = evaluate(preds, gold);
  EXPECT_EQ(r.answer->em, 1.0);
  EXPECT_EQ(r.support->f1, 1.0);
  EXPECT_EQ(r.joint->em, 1.0);
  for (const auto& g : r.groundedness) {
    ASSERT_TRUE(g.percentage);
    EXPECT_EQ(*g.percentage, 100.0) << to_string(g.kind);
  }
  EXPECT_EQ(r.segments->path_em, 1.0);
  EXPECT_EQ(r.segments->comparison_any_order_em, 1.0);
  int total = 0;
  for (const auto& b : r.buckets.at("all")) total += b.count;
  EXPECT_EQ(total, r.num_instances);
  EXPECT_EQ(r.buckets.at("all")[10].count, r.num_instances);
}

TEST(Evaluate, MissingPredictionsScoreZeroAndUnknownIdsThrow) {
  auto gold = testing_support::hotpot_fixture();
  std::vector<Prediction> preds{perfect(gold[0])};
  EvalReport r = evaluate(preds, gold);
  EXPECT_NEAR(r.answer->em, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r.diagnostics.size(), 2u);
  preds.push_back({"nobody", "x", std::nullopt, std::nullopt});
  EXPECT_THROW(evaluate(preds, gold), Error);
  EXPECT_EQ(unknown_prediction_ids(preds, gold), (std::vector<std::string>{"nobody"}));
  std::vector<Prediction> dup{perfect(gold[0]), perfect(gold[0])};
  EXPECT_THROW(evaluate(dup, gold), Error);
}

TEST(Evaluate, OptionsGateMetricFamilies) {
  auto gold = testing_support::hotpot_fixture();
  std::vector<Prediction> preds;
  for (const auto& q : gold) preds.push_back({q.id, q.answer, std::nullopt, std::nullopt});
  EvalReport r = evaluate(preds, gold, {true, false, PathSchema::full});
  EXPECT_TRUE(r.answer);
  EXPECT_FALSE(r.support);
  EXPECT_FALSE(r.joint);
  EXPECT_TRUE(r.buckets.empty());
  json j = to_json(r);
  EXPECT_TRUE(j["support"].is_null());
  EXPECT_FALSE(j.contains("support_em"));
  EXPECT_TRUE(j.contains("answer_em"));
  for (const auto& g : r.groundedness)
    if (g.kind == Grounding::pred_in_gold_passages) EXPECT_EQ(g.percentage, 100.0);
    else if (g.kind != Grounding::pred_in_gold_supports) EXPECT_FALSE(g.percentage);
}

TEST(Evaluate, BreakdownCountsSupports) {
  auto gold = testing_support::hotpot_fixture();
  std::vector<Prediction> preds;
  for (const auto& q : gold) preds.push_back(perfect(q));
  EvalReport r = evaluate(preds, gold);
  std::map<std::pair<std::string, std::string>, int> cells;
  for (const auto& c : r.breakdown) cells[{c.question_type, c.supports}] = c.count;
  EXPECT_EQ((cells[{"bridge", "4"}]), 1);
  EXPECT_EQ((cells[{"bridge", "3"}]), 1);
  EXPECT_EQ((cells[{"comparison", "2"}]), 1);
  EXPECT_EQ(support_count_label(0), "<2");
  EXPECT_EQ(support_count_label(7), ">=5");
}

TEST(Buckets, BoundariesAreRightClosed) {
  EXPECT_EQ(support_bucket(0.0), 0);
  EXPECT_EQ(support_bucket(0.05), 1);
  EXPECT_EQ(support_bucket(0.1), 1);
  EXPECT_EQ(support_bucket(0.1000001), 2);
  EXPECT_EQ(support_bucket(6.0 / 7.0), 9);
  EXPECT_EQ(support_bucket(1.0), 10);
}

TEST(Groundedness, FidFailureOnMemphis) {
  auto gold = testing_support::hotpot_fixture();
  const auto& q = testing_support::by_id(gold, "memphis-hustle");
  // The distractor answer sits in a passage outside the gold pair.
  Prediction p{q.id, "12,430", SupportSet{{"Lakeland, Tennessee", 1}}, std::nullopt};
  std::vector<Prediction> preds{p};
  std::vector<QuestionInstance> one{q};
  EXPECT_EQ(groundedness_row(Grounding::pred_in_gold_passages, preds, one), 0.0);
  EXPECT_EQ(groundedness_row(Grounding::pred_in_pred_supports, preds, one), 100.0);
  EXPECT_EQ(groundedness_row(Grounding::gold_in_pred_passages, preds, one), 0.0);
}

TEST(OfficialFormat, RoundTripsAndRejectsMalformed) {
  auto gold = testing_support::hotpot_fixture();
  std::vector<Prediction> preds;
  for (const auto& q : gold) preds.push_back({q.id, q.answer, q.gold_supports, std::nullopt});
  OfficialPredictions back = parse_official_predictions(to_official_json(preds));
  EXPECT_TRUE(back.has_answers);
  EXPECT_TRUE(back.has_supports);
  ASSERT_EQ(back.predictions.size(), preds.size());
  EvalReport r = evaluate(back.predictions, gold);
  EXPECT_EQ(r.joint->f1, 1.0);
  EXPECT_THROW(parse_official_predictions(json::parse(R"({"sp":{"a":[["t","0"]]}})")), Error);
  EXPECT_THROW(parse_official_predictions(json::array()), Error);
}

TEST(Rendering, TextAndCsvAreStable) {
  auto gold = testing_support::hotpot_fixture();
  std::vector<Prediction> preds;
  for (const auto& q : gold) preds.push_back(perfect(q));
  EvalReport r = evaluate(preds, gold);
  EXPECT_EQ(render_text(r), render_text(evaluate(preds, gold)));
  EXPECT_EQ(to_json(r).dump(), to_json(evaluate(preds, gold)).dump());
  EXPECT_NE(render_breakdown_csv(r).find("bridge"), std::string::npos);
  EXPECT_NE(render_buckets_csv(r).find("all"), std::string::npos);
}

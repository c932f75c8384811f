#include <gtest/gtest.h>

#include <algorithm>

#include "helpers.hpp"

using namespace pathfid;
using testing_support::by_id;
using testing_support::data_path;

TEST(Hotpot, LoadsFixtureAndRejectsBrokenRecords) {
  LoadResult r = load_hotpot(data_path("hotpot_fixture.json"));
  ASSERT_EQ(r.instances.size(), 3u);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].id, "broken-record");
  EXPECT_NE(r.rejected[0].reason.find("answer"), std::string::npos);

  const auto& m = by_id(r.instances, "memphis-hustle");
  EXPECT_EQ(m.passages.size(), 10u);
  EXPECT_EQ(m.type, QuestionType::bridge);
  EXPECT_EQ(m.gold_supports.size(), 4u);
  EXPECT_EQ(m.gold_passage_titles, (std::set<std::string>{"Memphis Hustle", "Southaven, Mississippi"}));
  EXPECT_EQ(by_id(r.instances, "comparison-heights").type, QuestionType::comparison);
}

TEST(Hotpot, SerializationRoundTrips) {
  auto qs = testing_support::hotpot_fixture();
  qs[0].passages[0].links = {"Southaven, Mississippi"};
  LoadResult back = parse_hotpot(to_hotpot_json(qs));
  EXPECT_TRUE(back.rejected.empty());
  EXPECT_EQ(back.instances, qs);
}

TEST(Hotpot, NonArrayDocumentThrows) {
  EXPECT_THROW(parse_hotpot(json::object()), Error);
  EXPECT_THROW(load_hotpot(data_path("does_not_exist.json")), Error);
}

TEST(Hotpot, OutOfRangeSupportIsRejected) {
  json doc = json::parse(R"([{"_id":"a","question":"q?","answer":"x","supporting_facts":[["T",3]],
                             "context":[["T",["one."]]]}])");
  LoadResult r = parse_hotpot(doc);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_NE(r.rejected[0].reason.find("out of range"), std::string::npos);
}

TEST(Iirc, MapsAnswerTypesAndSupports) {
  LoadResult r = load_iirc(data_path("iirc_fixture.json"), data_path("iirc_articles.json"));
  ASSERT_EQ(r.instances.size(), 4u);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].id, "q-5");

  const auto& q1 = by_id(r.instances, "q-1");
  EXPECT_EQ(q1.answer, "51");
  EXPECT_EQ(q1.type, QuestionType::other);
  ASSERT_EQ(q1.passages.size(), 2u);
  EXPECT_EQ(q1.passages[0].title, "Harbor Lighthouse");
  EXPECT_EQ(q1.passages[0].links, (std::vector<std::string>{"Port Ellis"}));
  EXPECT_EQ(q1.passages[1].title, "Port Ellis");
  EXPECT_EQ(q1.passages[1].sentences.size(), 3u);
  EXPECT_EQ(q1.gold_supports, (SupportSet{{"Harbor Lighthouse", 0}, {"Port Ellis", 0}}));

  EXPECT_EQ(by_id(r.instances, "q-2").answer, "yes");
  EXPECT_EQ(by_id(r.instances, "q-2").gold_supports, (SupportSet{{"Harbor Lighthouse", 2}}));
  EXPECT_EQ(by_id(r.instances, "q-3").answer, "Thomas Ellis");
  EXPECT_EQ(by_id(r.instances, "q-3").gold_supports, (SupportSet{{"Port Ellis", 1}}));
  EXPECT_EQ(by_id(r.instances, "q-4").answer, "unanswerable");
}

TEST(Iirc, SnippetsStandInForMissingArticles) {
  LoadResult r = load_iirc(data_path("iirc_fixture.json"));
  const auto& q1 = by_id(r.instances, "q-1");
  ASSERT_EQ(q1.passages.size(), 2u);
  EXPECT_EQ(q1.passages[1].sentences, (std::vector<std::string>{"Port Ellis was founded in 1820."}));
}

TEST(Synthetic, ShapeAndDeterminism) {
  SyntheticConfig cfg;
  auto a = generate_synthetic(cfg);
  auto b = generate_synthetic(cfg);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 64u);
  std::set<std::string> answers, heads;
  for (const auto& q : a) {
    EXPECT_FALSE(validate_instance(q)) << q.id;
    EXPECT_EQ(q.passages.size(), 10u);
    EXPECT_EQ(q.gold_passage_titles.size(), 2u);
    EXPECT_EQ(q.type, QuestionType::bridge);
    answers.insert(q.answer);
    const auto ts = q.titles();
    std::set<std::string> titles(ts.begin(), ts.end());
    EXPECT_EQ(titles.size(), q.passages.size()) << "duplicate titles in " << q.id;
    int holders = 0;
    for (const auto& p : q.passages) holders += passage_contains_answer(p, q.answer) ? 1 : 0;
    EXPECT_EQ(holders, 1) << q.id;
  }
  EXPECT_EQ(answers.size(), a.size());
  cfg.rng_seed = 8;
  EXPECT_NE(generate_synthetic(cfg), a);
}

TEST(Synthetic, LongerChainsFollowLinks) {
  SyntheticConfig cfg;
  cfg.num_instances = 20;
  cfg.hops = 4;
  for (const auto& q : generate_synthetic(cfg)) {
    ReasoningPath g = gold_path(q);
    ASSERT_EQ(g.hops.size(), 4u);
    EXPECT_NE(q.question.find(g.hops.front().title), std::string::npos);
    EXPECT_TRUE(passage_contains_answer(*q.find(g.hops.back().title), q.answer));
    for (std::size_t k = 0; k + 1 < g.hops.size(); ++k) {
      const auto& links = q.find(g.hops[k].title)->links;
      EXPECT_NE(std::find(links.begin(), links.end(), g.hops[k + 1].title), links.end());
    }
  }
}

TEST(Synthetic, InvalidConfigThrows) {
  SyntheticConfig cfg;
  cfg.hops = 1;
  EXPECT_THROW(generate_synthetic(cfg), Error);
  cfg.hops = 2;
  cfg.sentences_per_passage = 33;
  EXPECT_THROW(generate_synthetic(cfg), Error);
}

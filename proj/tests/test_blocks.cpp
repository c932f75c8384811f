#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace pathfid;

namespace {

const Passage kKiss{"Kiss and Tell (1945 film)",
                    {"Kiss and Tell is a 1945 film.", "Two girls cause concern.", "The parents bicker."},
                    {}};
const Passage kShirley{"Shirley Temple", {"Shirley Temple Black was an actress.", "She was Chief of Protocol."}, {}};
const std::string kQuestion = "Who portrayed Corliss Archer?";

}  // namespace

TEST(Blocks, FidTemplate) {
  InputBlock b = build_fid_block(kQuestion, kShirley);
  EXPECT_EQ(b.text(),
            "question: Who portrayed Corliss Archer? title: Shirley Temple context: Shirley Temple Black was an "
            "actress. She was Chief of Protocol.");
  EXPECT_EQ(b.kind, BlockKind::fid);
  EXPECT_EQ(b.source_titles, (std::vector<std::string>{"Shirley Temple"}));
  EXPECT_FALSE(check_block_markers(b, kDefaultBlockLen));
}

TEST(Blocks, PathTemplateNumbersSentences) {
  InputBlock b = build_path_block(kQuestion, kShirley);
  EXPECT_EQ(b.text(),
            "question: Who portrayed Corliss Archer? title: Shirley Temple context: <f1> Shirley Temple Black was "
            "an actress. <f2> She was Chief of Protocol.");
  EXPECT_FALSE(check_block_markers(b, kDefaultBlockLen));
}

TEST(Blocks, PairTemplate) {
  InputBlock b = build_pathplus_block(kQuestion, kKiss, kShirley);
  EXPECT_EQ(b.text(),
            "question: Who portrayed Corliss Archer? <title-1> Kiss and Tell (1945 film) <context-1> <f1> Kiss and "
            "Tell is a 1945 film. <f2> Two girls cause concern. <f3> The parents bicker. <title-2> Shirley Temple "
            "<context-2> <f1> Shirley Temple Black was an actress. <f2> She was Chief of Protocol.");
  EXPECT_EQ(b.source_titles, (std::vector<std::string>{kKiss.title, kShirley.title}));
  EXPECT_FALSE(check_block_markers(b, kDefaultPairBlockLen));
}

TEST(Blocks, TruncationNeverLeavesDanglingMarkers) {
  InputBlock full = build_path_block(kQuestion, kKiss);
  const int prefix = 12;  // question: + 4 words + title: + 5 title words + context:
  for (int len = prefix + 1; len <= static_cast<int>(full.tokens.size()) + 2; ++len) {
    InputBlock b = build_path_block(kQuestion, kKiss, len);
    EXPECT_LE(static_cast<int>(b.tokens.size()), len);
    EXPECT_FALSE(check_block_markers(b, len)) << len;
    EXPECT_TRUE(std::equal(b.tokens.begin(), b.tokens.end(), full.tokens.begin()));
  }
  EXPECT_THROW(build_path_block(kQuestion, kKiss, prefix), Error);
}

TEST(Blocks, RejectsBadInput) {
  EXPECT_THROW(build_fid_block("  ", kKiss), Error);
  EXPECT_THROW(build_path_block(kQuestion, Passage{"", {"x"}, {}}), Error);
  EXPECT_THROW(build_path_block(kQuestion, Passage{"T", {}, {}}), Error);
  Passage big{"Big", std::vector<std::string>(33, "s."), {}};
  try {
    build_path_block(kQuestion, big, 10000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("Big"), std::string::npos);
  }
}

TEST(Blocks, PairSetPairsEveryPassageWithTheFirstHop) {
  const auto qs = testing_support::hotpot_fixture();
  const auto& q = testing_support::by_id(qs, "kiss-and-tell");
  auto pairs = build_pair_set(q.passages, "Kiss and Tell (1945 film)");
  ASSERT_EQ(pairs.size(), q.passages.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(pairs[i].first.title, "Kiss and Tell (1945 film)");
    EXPECT_EQ(pairs[i].second.title, q.passages[i].title);
  }
  EXPECT_THROW(build_pair_set(q.passages, "Nope"), Error);
  auto blocks = build_instance_blocks(q, Mode::pathfid_plus, std::string("Shirley Temple"));
  EXPECT_EQ(blocks.size(), q.passages.size());
  for (const auto& b : blocks) EXPECT_EQ(b.kind, BlockKind::path_plus);
  EXPECT_THROW(build_instance_blocks(q, Mode::pathfid_plus), Error);
}

TEST(Blocks, InstanceBlocksFollowPassageOrder) {
  for (const auto& q : generate_synthetic(SyntheticConfig{})) {
    for (Mode m : {Mode::fid, Mode::pathfid}) {
      auto blocks = build_instance_blocks(q, m);
      ASSERT_EQ(blocks.size(), q.passages.size());
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        EXPECT_EQ(blocks[i].source_titles.front(), q.passages[i].title);
        EXPECT_FALSE(check_block_markers(blocks[i], default_max_len(blocks[i].kind)));
      }
    }
  }
}

TEST(Blocks, ModeNames) {
  EXPECT_EQ(mode_from("pathfid_plus"), Mode::pathfid_plus);
  EXPECT_EQ(to_string(Mode::fid), "fid");
  EXPECT_THROW(mode_from("bogus"), Error);
}

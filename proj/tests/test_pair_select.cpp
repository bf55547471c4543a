#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "reference_pair.hpp"
#include "ramp3d/pair_select.hpp"

namespace ramp3d {
namespace {

QueryOutputs make(std::vector<double> pick, std::vector<double> put, std::vector<std::vector<double>> q,
                  std::vector<std::vector<double>> k) {
  QueryOutputs o;
  o.pick_confidence = std::move(pick);
  o.put_confidence = std::move(put);
  o.pickup_embedding = std::move(q);
  o.putdown_embedding = std::move(k);
  return o;
}

TEST(PairScores, DotProducts) {
  const auto ortho = make({0.5, 0.5}, {0.5, 0.5}, {{1, 0}, {0, 1}}, {{1, 0}, {0, 1}});
  const auto s0 = pair_scores(ortho);
  EXPECT_EQ(s0[0][1], 0.0);
  EXPECT_EQ(s0[1][0], 0.0);

  const auto o = make({0.5, 0.5}, {0.5, 0.5}, {{1, 0}, {0, 0}}, {{0, 0}, {2, 0}});
  EXPECT_EQ(pair_scores(o)[0][1], 2.0);

  // q = rows of Q, k = rows of K; s[i][j] = q_i . k_j worked by hand
  const auto f = make({0.1, 0.2, 0.3, 0.4}, {0.4, 0.3, 0.2, 0.1},
                      {{1, 2, 0}, {0, -1, 3}, {2, 2, 2}, {-1, 0, 1}},
                      {{1, 1, 1}, {3, 0, -1}, {0, 2, 1}, {1, -1, 0}});
  const std::vector<std::vector<double>> expected{
      {0, 3, 4, -1},
      {2, 0, 1, 1},
      {6, 4, 0, 0},
      {0, -4, 1, 0},
  };
  const auto s = pair_scores(f);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) {
        EXPECT_DOUBLE_EQ(s[i][j], expected[i][j]) << i << "," << j;
      }
}

TEST(PairScores, DimensionMismatch) {
  const auto o = make({0.5, 0.5}, {0.5, 0.5}, {{1, 0}, {0, 1, 2}}, {{1, 0}, {0, 1}});
  try {
    pair_scores(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  EXPECT_THROW(pair_scores(make({0.5}, {0.5}, {{1}}, {{1}})), Error);
}

TEST(SelectActionPair, TwoQueries) {
  const auto o = make({0.9, 0.1}, {0.1, 0.9}, {{1}, {0}}, {{0}, {1}});
  const auto c = select_action_pair(o);
  EXPECT_EQ(c.pick, 0u);
  EXPECT_EQ(c.put, 1u);
  EXPECT_NEAR(c.score, std::log(0.9) + std::log(0.9) + 1.0, 1e-12);
}

TEST(SelectActionPair, ZeroConfidenceClamped) {
  const auto o = make({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {{0}, {0}, {0}}, {{0}, {0}, {0}});
  const auto c = select_action_pair(o);
  EXPECT_EQ(c.pick, 0u);  // all tied: smallest (i, j)
  EXPECT_EQ(c.put, 1u);
  EXPECT_NEAR(c.score, 2.0 * std::log(1e-12), 1e-9);
}

TEST(SelectActionPair, TopKRestriction) {
  // query 6 is the best pick under compatibility but ranks sixth on confidence
  QueryOutputs o;
  for (int i = 0; i < 7; ++i) {
    o.pick_confidence.push_back(0.9 - 0.1 * i);
    o.put_confidence.push_back(0.5);
    o.pickup_embedding.push_back({i == 6 ? 100.0 : 0.0});
    o.putdown_embedding.push_back({1.0});
  }
  const auto c = select_action_pair(o);
  EXPECT_NE(c.pick, 6u);
  EXPECT_EQ(testing::exhaustive_pair(o, 1.0).pick, 6u);
  PairSelectConfig wide;
  wide.top_k = 7;
  EXPECT_EQ(select_action_pair(o, wide).pick, 6u);
}

TEST(SelectActionPair, MatchesExhaustiveArgmax) {
  Rng rng(2024);
  int compared = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t q = 2 + rng.below(7);
    const auto o = testing::random_outputs(rng, q, 1 + rng.below(6));
    const auto top = testing::top_k_membership(o, 5);
    const auto restricted = testing::exhaustive_pair(o, 1.0, &top);
    const auto c = select_action_pair(o);
    EXPECT_EQ(c.pick, restricted.pick);
    EXPECT_EQ(c.put, restricted.put);
    EXPECT_NEAR(c.score, restricted.score, 1e-12);
    const auto global = testing::exhaustive_pair(o, 1.0);
    if (top[global.pick]) {
      ++compared;
      EXPECT_EQ(c.pick, global.pick);
      EXPECT_EQ(c.put, global.put);
    }
  }
  EXPECT_GT(compared, 300);
}

TEST(SelectActionPair, LambdaZeroIsIndependentArgmax) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const auto o = testing::random_outputs(rng, 2 + rng.below(7), 3);
    PairSelectConfig cfg;
    cfg.lambda = 0.0;
    const auto c = select_action_pair(o, cfg);
    // best pick by confidence, then best put among the others, unless swapping
    // the put's own pick slot scores higher; check against direct enumeration
    const auto top = testing::top_k_membership(o, 5);
    double best = -1e300;
    for (std::size_t i = 0; i < o.size(); ++i)
      for (std::size_t j = 0; j < o.size(); ++j)
        if (i != j && top[i]) best = std::max(best, std::log(o.pick_confidence[i]) + std::log(o.put_confidence[j]));
    EXPECT_NEAR(c.score, best, 1e-12);
    const std::size_t argmax_pick = static_cast<std::size_t>(
        std::max_element(o.pick_confidence.begin(), o.pick_confidence.end()) - o.pick_confidence.begin());
    std::size_t argmax_put = argmax_pick == 0 ? 1 : 0;
    for (std::size_t j = 0; j < o.size(); ++j)
      if (j != argmax_pick && o.put_confidence[j] > o.put_confidence[argmax_put]) argmax_put = j;
    if (c.pick == argmax_pick) {
      EXPECT_EQ(c.put, argmax_put);
    }
  }
}

TEST(SelectActionPair, PermutationInvariant) {
  Rng rng(11);
  for (int t = 0; t < 300; ++t) {
    const std::size_t q = 2 + rng.below(7);
    const auto o = testing::random_outputs(rng, q, 4);
    std::vector<std::size_t> perm(q);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = q - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    const auto a = select_action_pair(o);
    const auto b = select_action_pair(testing::permuted(o, perm));
    EXPECT_EQ(perm[b.pick], a.pick);
    EXPECT_EQ(perm[b.put], a.put);
  }
}

TEST(SelectActionPair, RaisingWinningScoreKeepsWinner) {
  Rng rng(13);
  for (int t = 0; t < 300; ++t) {
    auto o = testing::random_outputs(rng, 2 + rng.below(7), 3);
    const auto c = select_action_pair(o);
    // an extra embedding dimension that is nonzero only in q_i* and k_j*
    // raises s[i*][j*] and leaves every other entry unchanged
    const double delta = rng.uniform(0.0, 5.0);
    for (std::size_t i = 0; i < o.size(); ++i) {
      o.pickup_embedding[i].push_back(i == c.pick ? delta : 0.0);
      o.putdown_embedding[i].push_back(i == c.put ? 1.0 : 0.0);
    }
    const auto c2 = select_action_pair(o);
    EXPECT_EQ(c2.pick, c.pick);
    EXPECT_EQ(c2.put, c.put);
  }
}

TEST(DecideDone, Threshold) {
  EXPECT_TRUE(decide_done(0.9));
  EXPECT_FALSE(decide_done(0.5));
  EXPECT_FALSE(decide_done(0.1));
}

TEST(QueryOutputs, JsonRoundTrip) {
  Rng rng(1);
  auto o = testing::random_outputs(rng, 4, 3);
  o.masks = {Mask{true, false}, Mask{false, true}, Mask{true, true}, Mask{false, false}};
  const auto back = query_outputs_from_json(Json::parse(to_json(o).dump()));
  EXPECT_EQ(back.pick_confidence, o.pick_confidence);
  EXPECT_EQ(back.pickup_embedding, o.pickup_embedding);
  EXPECT_EQ(back.masks, o.masks);
  EXPECT_THROW(query_outputs_from_json(Json{{"queries", 3}}), Error);
}

}  // namespace
}  // namespace ramp3d

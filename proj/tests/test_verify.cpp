#include <gtest/gtest.h>

#include "card/verify.hpp"

using namespace card;

namespace {

std::vector<ProbVector> dists(std::initializer_list<std::vector<double>> rows) {
  std::vector<ProbVector> out;
  for (const auto& r : rows) out.emplace_back(r);
  return out;
}

}  // namespace

TEST(VerifyGreedy, AcceptsMatchingPrefixThenCorrects) {
  const auto p = dists({{0.1, 0.9, 0.0}, {0.2, 0.3, 0.5}, {0.6, 0.2, 0.2}});
  const std::vector<TokenId> cand{1, 0};
  const auto v = verify_greedy(p, cand);
  EXPECT_EQ(v.accepted, std::vector<TokenId>{1});
  EXPECT_EQ(v.correction, 2);
  EXPECT_EQ(v.accepted_len, 1u);
  EXPECT_EQ(v.lnew, 3u);
}

TEST(VerifyGreedy, FullAcceptTakesBonusToken) {
  const auto p = dists({{0.1, 0.9, 0.0}, {0.2, 0.3, 0.5}, {0.6, 0.2, 0.2}});
  const std::vector<TokenId> cand{1, 2};
  const auto v = verify_greedy(p, cand);
  EXPECT_EQ(v.accepted, cand);
  EXPECT_EQ(v.correction, 0);
  EXPECT_EQ(v.accepted_len, 2u);
}

TEST(VerifyGreedy, TiesGoToLowestId) {
  const auto p = dists({{0.5, 0.5}, {0.5, 0.5}});
  const std::vector<TokenId> cand{1};
  const auto v = verify_greedy(p, cand);
  EXPECT_TRUE(v.accepted.empty());
  EXPECT_EQ(v.correction, 0);
}

TEST(VerifyGreedy, EmptyCandidateAndArity) {
  const auto p = dists({{0.3, 0.7}});
  const auto v = verify_greedy(p, {});
  EXPECT_EQ(v.correction, 1);
  EXPECT_EQ(v.lnew, 1u);
  const std::vector<TokenId> cand{1, 1};
  EXPECT_THROW(verify_greedy(p, cand), InputError);
}

TEST(VerifySampling, AcceptRateMatchesTargetProbability) {
  // One-hot proposal at token 0 with p(0) = 0.6: accepted 60% of the time,
  // and a rejection must correct to token 1.
  const auto p = dists({{0.6, 0.4}, {0.5, 0.5}});
  const std::vector<ProbVector> q{ProbVector::one_hot(2, 0)};
  const std::vector<TokenId> cand{0};
  Rng rng(12);
  constexpr int kRuns = 20000;
  int accepted = 0;
  for (int i = 0; i < kRuns; ++i) {
    const auto v = verify_sampling(p, q, cand, 1.0, rng);
    if (v.accepted_len == 1) {
      ++accepted;
    } else {
      ASSERT_EQ(v.correction, 1);
    }
  }
  EXPECT_NEAR(static_cast<double>(accepted) / kRuns, 0.6, 0.02);
}

TEST(VerifySampling, ZeroProposalProbabilityIsProtocolError) {
  const auto p = dists({{0.6, 0.4}, {0.5, 0.5}});
  const std::vector<ProbVector> q{ProbVector::one_hot(2, 0)};
  const std::vector<TokenId> cand{1};
  Rng rng(1);
  EXPECT_THROW(verify_sampling(p, q, cand, 1.0, rng), ProtocolError);
  const std::vector<TokenId> ok{0};
  EXPECT_THROW(verify_sampling(p, q, ok, 0.0, rng), InputError);
  EXPECT_THROW(verify_sampling(p, {}, ok, 1.0, rng), InputError);
}

TEST(Residual, PositivePartNormalized) {
  const ProbVector p({0.5, 0.3, 0.2});
  const ProbVector q({0.2, 0.5, 0.3});
  const auto r = residual_weights(p, q);
  EXPECT_NEAR(r[0], 1.0, 1e-12);
  EXPECT_EQ(r[1], 0.0);
  EXPECT_EQ(r[2], 0.0);
  const auto same = residual_weights(p, p);
  EXPECT_EQ(same, std::vector<double>(p.probs().begin(), p.probs().end()));
  const auto mixed = residual_weights(ProbVector({0.5, 0.5, 0.0}), ProbVector({0.25, 0.25, 0.5}));
  EXPECT_NEAR(mixed[0], 0.5, 1e-12);
  EXPECT_NEAR(mixed[1], 0.5, 1e-12);
}

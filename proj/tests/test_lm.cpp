#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "card/cache.hpp"
#include "card/lm.hpp"
#include "card/mask.hpp"
#include "support/oracles.hpp"

using namespace card;

namespace {

std::shared_ptr<const ScriptedModel> scripted(const std::string& table, std::optional<TokenId> eos = std::nullopt) {
  std::istringstream in(table);
  return parse_scripted_model(in, "inline", {}, eos);
}

std::size_t parse_error_line(const std::string& table) {
  try {
    scripted(table);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(ProbVector, Validates) {
  EXPECT_NO_THROW(ProbVector({0.25, 0.75}));
  EXPECT_THROW(ProbVector({0.5, 0.6}), InputError);
  EXPECT_THROW(ProbVector({-0.1, 1.1}), InputError);
  EXPECT_THROW(ProbVector({std::nan(""), 1.0}), InputError);
  EXPECT_THROW(ProbVector::from_weights({0.0, 0.0}), InputError);
  EXPECT_EQ(ProbVector::from_weights({1, 3})[1], 0.75);
}

TEST(ProbVector, ArgmaxTiesGoToLowestId) {
  EXPECT_EQ(ProbVector({0.2, 0.4, 0.4}).argmax(), 1);
  EXPECT_EQ(ProbVector::uniform(5).argmax(), 0);
  EXPECT_EQ(ProbVector::one_hot(5, 3).argmax(), 3);
}

TEST(KGram, DeterministicAndContextLimited) {
  const auto a = make_kgram_model(9, 16, 2, 2.0);
  const auto b = make_kgram_model(9, 16, 2, 2.0);
  const std::vector<TokenId> c1{4, 7, 1}, c2{9, 7, 1}, c3{4, 8, 1};
  EXPECT_EQ(a->next_distribution(c1), b->next_distribution(c1));
  // Only the last two tokens matter.
  EXPECT_EQ(a->next_distribution(c1), a->next_distribution(c2));
  EXPECT_NE(a->next_distribution(c1), a->next_distribution(c3));
  EXPECT_NE(a->next_distribution(c1), make_kgram_model(10, 16, 2, 2.0)->next_distribution(c1));
}

TEST(KGram, DecayWeightsRecentTokens) {
  const auto flat = make_kgram_model(KGramParams{3, 12, 3, 2.0, std::nullopt, 1.0});
  const auto decayed = make_kgram_model(KGramParams{3, 12, 3, 2.0, std::nullopt, 0.25});
  const std::vector<TokenId> a{1, 2, 5}, b{7, 9, 5};
  EXPECT_NE(flat->next_distribution(a), decayed->next_distribution(a));
  // Older tokens move the distribution less under decay.
  auto tv = [](const ProbVector& p, const ProbVector& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.probs()[i] - q.probs()[i]);
    return s / 2;
  };
  EXPECT_LT(tv(decayed->next_distribution(a), decayed->next_distribution(b)),
            tv(flat->next_distribution(a), flat->next_distribution(b)));
  EXPECT_THROW(make_kgram_model(KGramParams{3, 12, 3, 2.0, std::nullopt, 0.0}), ConfigError);
  EXPECT_THROW(make_kgram_model(KGramParams{3, 12, 3, 2.0, std::nullopt, -1.0}), ConfigError);
}

TEST(KGram, RejectsBadParameters) {
  EXPECT_THROW(make_kgram_model(1, 1, 2, 1.0), ConfigError);
  EXPECT_THROW(make_kgram_model(1, 8, 0, 1.0), ConfigError);
  EXPECT_THROW(make_kgram_model(KGramParams{1, 8, 2, 1.0, TokenId{8}}), ConfigError);
}

TEST(Model, ValidatesContext) {
  const auto m = make_uniform_model(4);
  EXPECT_THROW(m->next_distribution({}), InputError);
  const std::vector<TokenId> bad{4};
  EXPECT_THROW(m->next_distribution(bad), InputError);
}

TEST(Model, EosSelfLoops) {
  const auto m = make_kgram_model(KGramParams{5, 6, 2, 1.0, TokenId{2}});
  const std::vector<TokenId> ctx{1, 2};
  EXPECT_EQ(m->next_distribution(ctx), ProbVector::one_hot(6, 2));
}

TEST(Scripted, LongestSuffixWins) {
  const auto m = scripted(
      "1 -> 1 0 0\n"
      "0 1 -> 0 1 0\n"
      "* -> 0 0 1\n");
  EXPECT_EQ(m->entries(), 2u);
  EXPECT_EQ(m->next_distribution(std::vector<TokenId>{2, 1}).argmax(), 0);
  EXPECT_EQ(m->next_distribution(std::vector<TokenId>{0, 1}).argmax(), 1);
  EXPECT_EQ(m->next_distribution(std::vector<TokenId>{2}).argmax(), 2);
}

TEST(Scripted, FallbackDefaultsToUniform) {
  const auto m = scripted("0 -> 0.5 0.5 0 0\n");
  EXPECT_EQ(m->next_distribution(std::vector<TokenId>{3}), ProbVector::uniform(4));
}

TEST(Scripted, ParseErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line("0 -> 1 0\n\n1 -> 0.5\n"), 3u);           // wrong width
  EXPECT_EQ(parse_error_line("# c\n0 1 0 0\n"), 2u);                  // no arrow
  EXPECT_EQ(parse_error_line("0 -> 1 0\nx -> 0 1\n"), 2u);            // bad token
  EXPECT_EQ(parse_error_line("0 -> 0.4 0.4\n"), 1u);                  // not normalized
  EXPECT_EQ(parse_error_line("0 -> 1 0\n0 -> 0 1\n"), 2u);            // duplicate key
  EXPECT_EQ(parse_error_line("5 -> 1 0\n"), 1u);                      // out of vocabulary
}

// Word-level toy: "the" -> {cat 0.6, dog 0.4}, "the cat" -> {sat 0.9, ran 0.1}.
TEST(Scripted, WordVocabularyExample) {
  enum : TokenId { kThe, kCat, kDog, kSat, kRan, kEnd };
  const auto m = scripted(
      "0 -> 0 0.6 0.4 0 0 0\n"
      "0 1 -> 0 0 0 0.9 0.1 0\n"
      "0 2 -> 0 0 0 0.3 0.7 0\n"
      "* -> 0 0 0 0 0 1\n",
      kEnd);
  TreeCache cache(CacheConfig{2, 2, 4, 6, kEnd}, kThe);
  const std::vector<TokenId> base{kThe};
  cache.expand_layer(std::vector<ProbVector>{m->next_distribution(base)});
  const auto batch = build_frontier_batch(cache);
  cache.expand_layer(batch_tree_forward(*m, base, batch.tokens, batch.mask));
  const auto q = cache.query(2);
  EXPECT_EQ(q.tokens, (std::vector<TokenId>{kCat, kSat}));
  EXPECT_NEAR(cache.log_score(q.path.back()), std::log(0.54), 1e-12);
  ASSERT_EQ(cache.frontier().size(), 2u);
  // "the dog ran" (0.28) beats "the cat ran" (0.06).
  EXPECT_EQ(cache.node(cache.frontier()[1]).token, kRan);
  EXPECT_EQ(cache.node(cache.node(cache.frontier()[1]).parent).token, kDog);
}

TEST(Temperature, SharpensAndFlattens) {
  const auto base = scripted("* -> 0.2 0.8\n");
  const std::vector<TokenId> ctx{0};
  const auto cold = with_temperature(base, 0.5)->next_distribution(ctx);
  EXPECT_NEAR(cold[1], 0.64 / 0.68, 1e-12);
  const auto hot = with_temperature(base, 1e6)->next_distribution(ctx);
  EXPECT_NEAR(hot[0], 0.5, 1e-5);
  EXPECT_EQ(with_temperature(base, 1.0)->next_distribution(ctx), base->next_distribution(ctx));
  EXPECT_THROW(with_temperature(base, 0.0), InputError);
}

TEST(WithSpec, KeepsDistributions) {
  const auto base = make_kgram_model(1, 8, 2, 1.0, ModelSpec{70, 70});
  const auto copy = with_spec(base, ModelSpec{7, 10});
  const std::vector<TokenId> ctx{3, 4};
  EXPECT_EQ(copy->next_distribution(ctx), base->next_distribution(ctx));
  EXPECT_EQ(copy->spec().forward_latency, 10.0);
}

TEST(ChainForward, OneDistributionPerPrefix) {
  const auto m = make_kgram_model(4, 10, 3, 1.5);
  const std::vector<TokenId> ctx{1, 2}, chain{3, 4, 5};
  const auto d = chain_forward(*m, ctx, chain);
  ASSERT_EQ(d.size(), 4u);
  std::vector<TokenId> full = ctx;
  for (std::size_t i = 0; i <= chain.size(); ++i) {
    EXPECT_EQ(d[i], m->next_distribution(full));
    if (i < chain.size()) full.push_back(chain[i]);
  }
}

TEST(BatchTreeForward, MatchesReferenceOnRandomTrees) {
  std::mt19937_64 gen(17);
  const auto m = make_kgram_model(8, 20, 3, 2.0);
  const std::vector<TokenId> base{4, 9};
  for (int t = 0; t < 100; ++t) {
    TreeCache cache(CacheConfig{8, 4, 16, 20, std::nullopt}, base.back());
    std::vector<NodeId> nodes{cache.root()};
    const std::size_t n = 1 + gen() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      const NodeId parent = nodes[gen() % nodes.size()];
      const auto tok = static_cast<TokenId>(gen() % 20);
      if (!cache.find_child(parent, tok).valid()) nodes.push_back(cache.append_child(parent, tok, -1.0));
    }
    std::vector<NewToken> fresh;
    for (int i = 0; i < 6; ++i) fresh.push_back({nodes[gen() % nodes.size()], static_cast<TokenId>(gen() % 20)});
    const auto batch = build_mask(cache, fresh);
    const auto fast = batch_tree_forward(*m, base, batch.tokens, batch.mask);
    ASSERT_EQ(fast, batch_tree_forward_reference(*m, base, batch.tokens, batch.mask));
    // Each row equals a plain forward over its path.
    for (std::size_t r = 0; r < fresh.size(); ++r) {
      std::vector<TokenId> ctx;
      for (NodeId id = fresh[r].parent; id != cache.origin(); id = cache.node(id).parent) {
        ctx.push_back(cache.node(id).token);
      }
      ctx.insert(ctx.end(), base.rbegin(), base.rend());
      std::reverse(ctx.begin(), ctx.end());
      ctx.push_back(fresh[r].token);
      EXPECT_EQ(fast[r], m->next_distribution(ctx));
    }
  }
}

TEST(BatchTreeForward, RejectsShapeMismatch) {
  const auto m = make_uniform_model(4);
  const std::vector<TokenId> base{0}, tokens{1, 2};
  AttentionMask mask(1, {AttentionMask::kBaseParent});
  mask.set(0, 0);
  EXPECT_THROW(batch_tree_forward(*m, base, tokens, mask), InputError);
}

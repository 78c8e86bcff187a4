#pragma once

#include <random>
#include <vector>

#include "card/engine.hpp"
#include "card/lm.hpp"
#include "oracles.hpp"

namespace card::testing {

struct EngineFixture {
  ModelPtr draft;
  ModelPtr target;
  std::vector<TokenId> prompt;
  EngineConfig config;
};

// Randomized draft/target pair with partial agreement. V in [4,64],
// K in [1,32], ratio in [1,8].
inline EngineFixture random_engine_fixture(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  };
  EngineFixture f;
  const std::size_t vocab = pick(4, 64);
  const std::size_t ratio = pick(1, 8);
  const ModelSpec target_spec{70.0, 70.0};
  const ModelSpec draft_spec{7.0, 70.0 / static_cast<double>(ratio)};
  const std::uint64_t model_seed = gen();
  std::optional<TokenId> eos;
  if (pick(0, 3) == 0) eos = static_cast<TokenId>(pick(0, vocab - 1));

  switch (pick(0, 3)) {
    case 0: {  // lower-order approximation of the target
      const std::size_t order = pick(2, 4);
      const double sharp = 0.5 + static_cast<double>(pick(0, 30)) / 10.0;
      f.target = make_kgram_model(KGramParams{model_seed, vocab, order, sharp, eos}, target_spec);
      f.draft = make_kgram_model(KGramParams{model_seed, vocab, pick(1, order - 1), sharp, eos}, draft_spec);
      break;
    }
    case 1: {  // unrelated models
      f.target = make_kgram_model(KGramParams{model_seed, vocab, pick(1, 3), 1.5, eos}, target_spec);
      f.draft = make_kgram_model(KGramParams{gen(), vocab, pick(1, 3), 1.5, eos}, draft_spec);
      break;
    }
    case 2: {  // tie-heavy quantized tables
      f.target = std::make_shared<QuantizedModel>(model_seed, vocab, pick(1, 3), target_spec);
      f.draft = std::make_shared<QuantizedModel>(pick(0, 1) ? model_seed : gen(), vocab, pick(1, 3), draft_spec);
      break;
    }
    default: {  // identical distributions
      f.target = make_kgram_model(KGramParams{model_seed, vocab, pick(1, 3), 2.0, eos}, target_spec);
      f.draft = with_spec(f.target, draft_spec);
      break;
    }
  }
  const std::size_t prompt_len = pick(1, 8);
  for (std::size_t i = 0; i < prompt_len; ++i) f.prompt.push_back(static_cast<TokenId>(pick(0, vocab - 1)));

  f.config.width = pick(1, 32);
  f.config.branching = pick(1, 8);
  f.config.ratio = ratio;
  f.config.max_new_tokens = pick(1, 64);
  f.config.correction_enabled = pick(0, 4) != 0;
  f.config.seed = gen();
  if (pick(0, 2) == 0) f.config.query_depth = pick(1, ratio + 2);
  if (f.config.query_depth && pick(0, 1)) f.config.max_depth = *f.config.query_depth + pick(0, 4);
  return f;
}

}  // namespace card::testing

#pragma once

// Model interface and deterministic toy language models.
//
// Models are immutable after construction; every method is safe to call
// concurrently. Toy models recompute from the full context on each call.

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "card/mask.hpp"
#include "card/types.hpp"

namespace card {

class Model {
 public:
  Model(std::size_t vocab_size, ModelSpec spec, std::optional<TokenId> eos = std::nullopt);
  virtual ~Model() = default;

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  std::size_t vocab_size() const { return vocab_size_; }
  const ModelSpec& spec() const { return spec_; }
  std::optional<TokenId> eos() const { return eos_; }

  // Distribution over the token following `context`. Throws InputError on an
  // empty context or an out-of-vocabulary token. A context ending in EOS
  // yields the EOS self-loop.
  ProbVector next_distribution(std::span<const TokenId> context) const;

  bool in_vocab(TokenId token) const {
    return token >= 0 && static_cast<std::size_t>(token) < vocab_size_;
  }

 protected:
  // Called with a validated, non-empty context.
  virtual ProbVector compute(std::span<const TokenId> context) const = 0;

 private:
  std::size_t vocab_size_;
  ModelSpec spec_;
  std::optional<TokenId> eos_;
};

using ModelPtr = std::shared_ptr<const Model>;

// ----------------------------------------------------------------------------
// Toy models
// ----------------------------------------------------------------------------

ModelPtr make_uniform_model(std::size_t vocab, ModelSpec spec = {});

// Hashed backoff k-gram model. Logits are
//   sharpness * sum_{j=1..order} decay^(j-1) * g(seed, last j tokens)
// with g a table of standard-normal draws keyed by the j-gram. Models that
// share a seed share their lower-order terms, so a low-order model is a
// natural approximation of a higher-order one; decay < 1 makes it a closer one.
struct KGramParams {
  std::uint64_t seed = 0;
  std::size_t vocab = 2;
  std::size_t order = 1;
  double sharpness = 1.0;
  std::optional<TokenId> eos;
  double decay = 1.0;
};

ModelPtr make_kgram_model(const KGramParams& params, ModelSpec spec = {});

inline ModelPtr make_kgram_model(std::uint64_t seed, std::size_t vocab, std::size_t order,
                                 double sharpness, ModelSpec spec = {}) {
  return make_kgram_model(KGramParams{seed, vocab, order, sharpness, std::nullopt}, spec);
}

// Explicit context -> distribution table. Lookup uses the longest table key
// that is a suffix of the context; contexts with no matching key get the
// fallback distribution.
class ScriptedModel final : public Model {
 public:
  ScriptedModel(std::map<std::vector<TokenId>, ProbVector> table, ProbVector fallback,
                ModelSpec spec = {}, std::optional<TokenId> eos = std::nullopt);

  std::size_t entries() const { return table_.size(); }

 protected:
  ProbVector compute(std::span<const TokenId> context) const override;

 private:
  std::map<std::vector<TokenId>, ProbVector> table_;
  ProbVector fallback_;
  std::size_t longest_key_ = 0;
};

// Parses the plain-text scripted table:
//
//   # comment
//   3 1 -> 0.0 1.0 0.0 0.0
//   *   -> 0.25 0.25 0.25 0.25     (fallback; uniform when absent)
//
// Vocabulary size is the length of the first distribution. Throws ParseError
// with the offending line number.
std::shared_ptr<const ScriptedModel> parse_scripted_model(std::istream& in, const std::string& name,
                                                          ModelSpec spec = {},
                                                          std::optional<TokenId> eos = std::nullopt);

// Applies softmax temperature (p^(1/T), renormalized) to every distribution.
// Requires temperature > 0.
ModelPtr with_temperature(ModelPtr base, double temperature);

// Same distributions as `base` with different metadata; used to pair a model
// with itself as both draft and target at different latencies.
ModelPtr with_spec(ModelPtr base, ModelSpec spec);

// ----------------------------------------------------------------------------
// Batched forwards
// ----------------------------------------------------------------------------

// One distribution per mask row. Row i sees base_context followed by the tree
// tokens visible in that row, in column order. Rows are evaluated in parallel.
// Throws InputError on shape mismatch and MaskError on a row whose visible set
// is not the ancestor path of its own column.
std::vector<ProbVector> batch_tree_forward(const Model& model, std::span<const TokenId> base_context,
                                           std::span<const TokenId> tree_tokens,
                                           const AttentionMask& mask);

// Serial reference: rebuilds each row's path from column parent links and
// calls next_distribution once per row.
std::vector<ProbVector> batch_tree_forward_reference(const Model& model,
                                                     std::span<const TokenId> base_context,
                                                     std::span<const TokenId> tree_tokens,
                                                     const AttentionMask& mask);

// Target-side chain forward: |chain| + 1 distributions, entry i predicting
// the token after context + chain[0..i).
std::vector<ProbVector> chain_forward(const Model& model, std::span<const TokenId> context,
                                      std::span<const TokenId> chain);

}  // namespace card

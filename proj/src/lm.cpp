#include "card/lm.hpp"

#include <algorithm>
#include <bit>

#include "card/parallel.hpp"

namespace card {

Model::Model(std::size_t vocab_size, ModelSpec spec, std::optional<TokenId> eos)
    : vocab_size_(vocab_size), spec_(spec), eos_(eos) {
  if (vocab_size_ < 2) throw ConfigError("vocabulary size must be at least 2");
  spec_.validate();
  if (eos_ && !in_vocab(*eos_)) throw ConfigError("EOS token outside the vocabulary");
}

ProbVector Model::next_distribution(std::span<const TokenId> context) const {
  if (context.empty()) throw InputError("next_distribution: empty context");
  for (TokenId t : context) {
    if (!in_vocab(t)) {
      throw InputError("next_distribution: token " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab_size_));
    }
  }
  if (eos_ && context.back() == *eos_) return ProbVector::one_hot(vocab_size_, *eos_);
  return compute(context);
}

namespace {

void check_batch_shape(std::span<const TokenId> base_context, std::span<const TokenId> tree_tokens,
                       const AttentionMask& mask) {
  if (base_context.empty()) throw InputError("batch_tree_forward: empty base context");
  if (tree_tokens.size() != mask.cols()) {
    throw InputError("batch_tree_forward: " + std::to_string(tree_tokens.size()) +
                     " tree tokens for a mask with " + std::to_string(mask.cols()) + " columns");
  }
  if (mask.rows() > mask.cols()) throw InputError("batch_tree_forward: mask has more rows than columns");
}

std::vector<TokenId> row_context(std::span<const TokenId> base_context, std::span<const TokenId> tree_tokens,
                                 const AttentionMask& mask, std::size_t row) {
  std::vector<TokenId> context(base_context.begin(), base_context.end());
  const auto words = mask.row_words(row);
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::uint64_t bits = words[w];
    while (bits != 0) {
      const auto col = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
      context.push_back(tree_tokens[col]);
      bits &= bits - 1;
    }
  }
  return context;
}

}  // namespace

std::vector<ProbVector> batch_tree_forward(const Model& model, std::span<const TokenId> base_context,
                                           std::span<const TokenId> tree_tokens,
                                           const AttentionMask& mask) {
  check_batch_shape(base_context, tree_tokens, mask);
  mask.validate();
  std::vector<ProbVector> out(mask.rows());
  parallel_for(mask.rows(), [&](std::size_t row) {
    out[row] = model.next_distribution(row_context(base_context, tree_tokens, mask, row));
  });
  return out;
}

std::vector<ProbVector> batch_tree_forward_reference(const Model& model,
                                                     std::span<const TokenId> base_context,
                                                     std::span<const TokenId> tree_tokens,
                                                     const AttentionMask& mask) {
  check_batch_shape(base_context, tree_tokens, mask);
  mask.validate();
  const auto parents = mask.column_parents();
  std::vector<ProbVector> out;
  out.reserve(mask.rows());
  for (std::size_t row = 0; row < mask.rows(); ++row) {
    std::vector<TokenId> path;
    for (auto col = static_cast<std::int32_t>(mask.own_column(row)); col != AttentionMask::kBaseParent;
         col = parents[static_cast<std::size_t>(col)]) {
      path.push_back(tree_tokens[static_cast<std::size_t>(col)]);
    }
    std::vector<TokenId> context(base_context.begin(), base_context.end());
    context.insert(context.end(), path.rbegin(), path.rend());
    out.push_back(model.next_distribution(context));
  }
  return out;
}

std::vector<ProbVector> chain_forward(const Model& model, std::span<const TokenId> context,
                                      std::span<const TokenId> chain) {
  if (context.empty()) throw InputError("chain_forward: empty context");
  std::vector<TokenId> full(context.begin(), context.end());
  full.insert(full.end(), chain.begin(), chain.end());
  std::vector<ProbVector> out(chain.size() + 1);
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = model.next_distribution(std::span<const TokenId>(full).first(context.size() + i));
  });
  return out;
}

}  // namespace card

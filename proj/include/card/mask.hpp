#pragma once

// Tree-attention masks for the draft model's batched expansion step.
//
// Columns index tree tokens below the draft anchor in topological order.
// Rows correspond to the trailing `rows()` columns (the tokens being fed this
// step). Base-context tokens (up to and including the anchor) are implicitly
// visible to every row and have no column.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "card/node_id.hpp"
#include "card/types.hpp"

namespace card {

class TreeCache;

class AttentionMask {
 public:
  static constexpr std::int32_t kBaseParent = -1;

  AttentionMask() = default;
  // All bits clear. column_parents[c] is the parent column of c, or
  // kBaseParent when c hangs directly off the base context.
  AttentionMask(std::size_t rows, std::vector<std::int32_t> column_parents);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return parents_.size(); }
  std::span<const std::int32_t> column_parents() const { return parents_; }

  // Column holding row i's own token.
  std::size_t own_column(std::size_t row) const { return cols() - rows_ + row; }

  bool test(std::size_t row, std::size_t col) const {
    return (row_words(row)[col / 64] >> (col % 64)) & 1U;
  }
  void set(std::size_t row, std::size_t col, bool value = true);

  std::span<const std::uint64_t> row_words(std::size_t row) const {
    return {bits_.data() + row * words_per_row_, words_per_row_};
  }
  std::span<std::uint64_t> row_words(std::size_t row) {
    return {bits_.data() + row * words_per_row_, words_per_row_};
  }

  // Visible columns of a row in ascending order.
  std::vector<std::size_t> visible_columns(std::size_t row) const;

  // Throws MaskError unless parents are topologically ordered and every row's
  // visible set is exactly ancestors(own column) plus the own column.
  void validate() const;

  // True when the trailing rows x rows block is the identity.
  bool has_identity_tail() const;

  // One line per row of '0'/'1' characters.
  std::string dump() const;

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::int32_t> parents_;
  std::vector<std::uint64_t> bits_;
};

// A token about to be fed to the draft, attached under an existing node.
struct NewToken {
  NodeId parent;
  TokenId token;
};

// Everything the batched draft forward needs for one step.
struct TreeBatch {
  std::vector<TokenId> tokens;  // one per column
  std::vector<NodeId> nodes;    // arena node per column; none() for new tokens
  AttentionMask mask;
};

// Incremental construction: prior columns are every alive node strictly below
// the draft anchor; each column's row is inherited from its parent's row plus
// its own bit, and the new tokens' rows form the mask. Throws InputError on a
// dead, unknown, or off-tree parent.
TreeBatch build_mask(const TreeCache& cache, std::span<const NewToken> new_tokens);

// Reference for differential testing: same columns, each row rebuilt by
// walking parent links in the arena.
TreeBatch build_mask_reference(const TreeCache& cache, std::span<const NewToken> new_tokens);

// Mask for the next expand_layer call: the frontier nodes are the new block
// and the prior columns are their alive ancestors. Requires a non-empty
// frontier.
TreeBatch build_frontier_batch(const TreeCache& cache);

// Full visibility matrix over all alive tree nodes below the anchor (square;
// row c = ancestors(c) plus c). A chain yields the standard causal mask.
AttentionMask build_full_mask(const TreeCache& cache);

}  // namespace card

#include "card/mask.hpp"

#include <algorithm>

#include "card/cache.hpp"
#include "card/parallel.hpp"

namespace card {

AttentionMask::AttentionMask(std::size_t rows, std::vector<std::int32_t> column_parents)
    : rows_(rows), words_per_row_((column_parents.size() + 63) / 64), parents_(std::move(column_parents)) {
  if (rows_ > parents_.size()) throw MaskError("mask has more rows than columns");
  for (std::size_t c = 0; c < parents_.size(); ++c) {
    const std::int32_t p = parents_[c];
    if (p != kBaseParent && (p < 0 || static_cast<std::size_t>(p) >= c)) {
      throw MaskError("column " + std::to_string(c) + " has a parent that is not an earlier column");
    }
  }
  bits_.assign(rows_ * words_per_row_, 0);
}

void AttentionMask::set(std::size_t row, std::size_t col, bool value) {
  auto words = row_words(row);
  const std::uint64_t bit = std::uint64_t{1} << (col % 64);
  if (value) {
    words[col / 64] |= bit;
  } else {
    words[col / 64] &= ~bit;
  }
}

std::vector<std::size_t> AttentionMask::visible_columns(std::size_t row) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < cols(); ++c) {
    if (test(row, c)) out.push_back(c);
  }
  return out;
}

void AttentionMask::validate() const {
  std::vector<std::uint64_t> expected(words_per_row_);
  for (std::size_t r = 0; r < rows_; ++r) {
    std::fill(expected.begin(), expected.end(), 0);
    for (auto c = static_cast<std::int32_t>(own_column(r)); c != kBaseParent; c = parents_[static_cast<std::size_t>(c)]) {
      expected[static_cast<std::size_t>(c) / 64] |= std::uint64_t{1} << (static_cast<std::size_t>(c) % 64);
    }
    const auto actual = row_words(r);
    if (!std::equal(expected.begin(), expected.end(), actual.begin())) {
      throw MaskError("mask row " + std::to_string(r) + " is not the ancestor path of its own column");
    }
  }
}

bool AttentionMask::has_identity_tail() const {
  const std::size_t first = cols() - rows_;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t j = 0; j < rows_; ++j) {
      if (test(r, first + j) != (r == j)) return false;
    }
  }
  return true;
}

std::string AttentionMask::dump() const {
  std::string out;
  out.reserve(rows_ * (cols() + 1));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols(); ++c) out += test(r, c) ? '1' : '0';
    out += '\n';
  }
  return out;
}

namespace {

struct Columns {
  std::vector<NodeId> nodes;        // prior columns
  std::vector<std::int32_t> col_of; // arena index -> column, -1 if none
};

Columns prior_columns(const TreeCache& cache, std::span<const NodeId> exclude) {
  Columns cols;
  cols.col_of.assign(cache.arena_size(), -1);
  std::vector<bool> skip(cache.arena_size(), false);
  for (NodeId id : exclude) skip[id.index()] = true;
  for (NodeId id : cache.alive_below(cache.origin())) {
    if (skip[id.index()]) continue;
    cols.col_of[id.index()] = static_cast<std::int32_t>(cols.nodes.size());
    cols.nodes.push_back(id);
  }
  return cols;
}

std::int32_t parent_column(const TreeCache& cache, const Columns& cols, NodeId parent) {
  if (!cache.alive(parent)) throw InputError("mask parent is dead or unknown");
  if (parent == cache.origin()) return AttentionMask::kBaseParent;
  const std::int32_t col = cols.col_of[parent.index()];
  if (col < 0) throw InputError("mask parent is not below the draft anchor");
  return col;
}

enum class RowMode { kInherit, kWalk };

TreeBatch assemble(const TreeCache& cache, const Columns& cols, std::span<const NewToken> new_tokens,
                   std::span<const NodeId> new_nodes, RowMode mode) {
  const std::size_t prior = cols.nodes.size();
  const std::size_t total = prior + new_tokens.size();

  TreeBatch batch;
  batch.tokens.reserve(total);
  batch.nodes.reserve(total);
  std::vector<std::int32_t> parents;
  parents.reserve(total);
  for (NodeId id : cols.nodes) {
    const CacheNode& n = cache.node(id);
    batch.tokens.push_back(n.token);
    batch.nodes.push_back(id);
    parents.push_back(parent_column(cache, cols, n.parent));
  }
  for (std::size_t i = 0; i < new_tokens.size(); ++i) {
    if (new_tokens[i].token < 0 ||
        static_cast<std::size_t>(new_tokens[i].token) >= cache.config().vocab_size) {
      throw InputError("new token outside the vocabulary");
    }
    batch.tokens.push_back(new_tokens[i].token);
    batch.nodes.push_back(new_nodes.empty() ? NodeId::none() : new_nodes[i]);
    parents.push_back(parent_column(cache, cols, new_tokens[i].parent));
  }

  AttentionMask mask(new_tokens.size(), parents);
  if (mode == RowMode::kInherit) {
    // Causal history inheritance: each column's scope is its parent's scope
    // plus itself. Only prior columns need materialized scopes.
    const std::size_t words = (total + 63) / 64;
    std::vector<std::uint64_t> scope(prior * words, 0);
    auto scope_of = [&](std::size_t c) { return std::span<std::uint64_t>(scope.data() + c * words, words); };
    for (std::size_t c = 0; c < prior; ++c) {
      auto row = scope_of(c);
      if (parents[c] != AttentionMask::kBaseParent) {
        auto from = scope_of(static_cast<std::size_t>(parents[c]));
        std::copy(from.begin(), from.end(), row.begin());
      }
      row[c / 64] |= std::uint64_t{1} << (c % 64);
    }
    parallel_for(new_tokens.size(), [&](std::size_t r) {
      auto row = mask.row_words(r);
      const std::int32_t p = parents[prior + r];
      if (p != AttentionMask::kBaseParent) {
        auto from = scope_of(static_cast<std::size_t>(p));
        std::copy(from.begin(), from.end(), row.begin());
      }
      mask.set(r, prior + r);
    });
  } else {
    for (std::size_t r = 0; r < new_tokens.size(); ++r) {
      mask.set(r, prior + r);
      for (NodeId id = new_tokens[r].parent; id != cache.origin(); id = cache.node(id).parent) {
        mask.set(r, static_cast<std::size_t>(cols.col_of[id.index()]));
      }
    }
  }
  batch.mask = std::move(mask);
  return batch;
}

}  // namespace

TreeBatch build_mask(const TreeCache& cache, std::span<const NewToken> new_tokens) {
  return assemble(cache, prior_columns(cache, {}), new_tokens, {}, RowMode::kInherit);
}

TreeBatch build_mask_reference(const TreeCache& cache, std::span<const NewToken> new_tokens) {
  return assemble(cache, prior_columns(cache, {}), new_tokens, {}, RowMode::kWalk);
}

TreeBatch build_frontier_batch(const TreeCache& cache) {
  const auto frontier = cache.frontier();
  if (frontier.empty()) throw InputError("build_frontier_batch: empty frontier");
  std::vector<NewToken> fresh;
  fresh.reserve(frontier.size());
  for (NodeId id : frontier) fresh.push_back(NewToken{cache.node(id).parent, cache.node(id).token});
  return assemble(cache, prior_columns(cache, frontier), fresh, frontier, RowMode::kInherit);
}

AttentionMask build_full_mask(const TreeCache& cache) {
  const Columns cols = prior_columns(cache, {});
  std::vector<std::int32_t> parents;
  for (NodeId id : cols.nodes) parents.push_back(parent_column(cache, cols, cache.node(id).parent));
  AttentionMask mask(cols.nodes.size(), parents);
  for (std::size_t r = 0; r < cols.nodes.size(); ++r) {
    for (NodeId id = cols.nodes[r]; id != cache.origin(); id = cache.node(id).parent) {
      mask.set(r, static_cast<std::size_t>(cols.col_of[id.index()]));
    }
  }
  return mask;
}

}  // namespace card

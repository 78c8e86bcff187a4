#pragma once

// Tree-structured candidate cache.
//
// The arena is append-only with tombstones. Two anchors are tracked:
//   root   - last target-verified token; queries start here.
//   origin - where the draft's beam is anchored; expansion masks and the
//            draft's base context end here.
// With correction enabled both anchors always coincide. The query-only
// ablation moves `root` along cached children without pruning, leaving
// `origin` behind.
//
// Scores are natural-log cumulative path probabilities. Stored values are
// absolute; accessors re-base them so the root scores 0. Compaction rewrites
// the stored values relative to the root.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "card/node_id.hpp"
#include "card/types.hpp"

namespace card {

struct CacheNode {
  TokenId token = 0;
  NodeId parent;
  std::uint32_t depth = 0;     // absolute; layer relative to root = depth - depth(root)
  double raw_score = 0.0;      // absolute cumulative log probability
  double edge_log_prob = 0.0;  // log p(token | parent path)
  bool alive = true;
  NodeId first_child;
  NodeId last_child;
  NodeId next_sibling;
};

struct CacheConfig {
  std::size_t width = 1;      // K: primary cache (frontier) size
  std::size_t branching = 1;  // k: per-node extension set size
  std::size_t max_depth = 2;  // frontier layer cap relative to root
  std::size_t vocab_size = 2;
  std::optional<TokenId> eos;

  void validate() const;
};

// Secondary-cache entry: extension token, full path weight (log), and the
// index of its parent within the expansion sources.
struct CandidateTuple {
  TokenId token = 0;
  double weight = 0.0;
  std::size_t parent_index = 0;

  friend bool operator==(const CandidateTuple&, const CandidateTuple&) = default;
};

struct QueryResult {
  bool hit = false;
  std::vector<NodeId> path;        // root-descendant chain, root excluded
  std::vector<TokenId> tokens;     // token per path node
  std::vector<double> log_probs;   // draft log conditional per path node
};

enum class ExpandStatus { kExpanded, kFrontierFull };

class TreeCache {
 public:
  static constexpr double kCompactionDeadFraction = 0.75;

  TreeCache(CacheConfig config, TokenId root_token);

  const CacheConfig& config() const { return config_; }
  NodeId root() const { return root_; }
  NodeId origin() const { return origin_; }
  std::span<const NodeId> frontier() const { return frontier_; }

  const CacheNode& node(NodeId id) const;
  bool contains(NodeId id) const { return id.valid() && id.index() < nodes_.size(); }
  bool alive(NodeId id) const { return contains(id) && nodes_[id.index()].alive; }

  // Layer relative to the root (negative for nodes above it).
  std::int64_t layer(NodeId id) const;
  // Cumulative log probability re-based to the root.
  double log_score(NodeId id) const;

  std::size_t arena_size() const { return nodes_.size(); }
  std::size_t alive_count() const { return nodes_.size() - dead_; }
  std::size_t dead_count() const { return dead_; }

  // Layer of the frontier relative to the root; 0 for an empty frontier.
  std::int64_t frontier_depth() const;
  bool frontier_full() const;

  // Nodes the next expansion extends: the frontier, or the origin when the
  // frontier is empty.
  std::vector<NodeId> expansion_sources() const;

  // Alive children in creation order.
  std::vector<NodeId> children(NodeId id) const;
  NodeId find_child(NodeId parent, TokenId token) const;
  bool is_ancestor_or_self(NodeId ancestor, NodeId id) const;

  // Alive nodes strictly below `anchor`, ascending id (a topological order).
  std::vector<NodeId> alive_below(NodeId anchor) const;

  // ---------------------------------------------------------------------------
  // Expansion
  // ---------------------------------------------------------------------------

  // Secondary pool for the given sources and their distributions: per source
  // the top-k tokens by (probability desc, token asc), zero-probability tokens
  // and tokens already cached under the source excluded, EOS sources skipped.
  // Rows are processed in parallel.
  std::vector<CandidateTuple> build_candidate_pool(std::span<const NodeId> sources,
                                                   std::span<const ProbVector> distributions) const;
  std::vector<CandidateTuple> build_candidate_pool_serial(std::span<const NodeId> sources,
                                                          std::span<const ProbVector> distributions) const;

  // One beam layer. `distributions` aligns with expansion_sources(). Builds
  // the secondary pool, sorts it by (weight desc, token asc, parent id asc),
  // appends the top-K as children and makes them the new frontier. Sources
  // that produced no winner are pruned along with ancestors left childless.
  // Returns kFrontierFull without mutating when the depth cap is reached.
  // Throws InputError on arity or vocabulary mismatch.
  ExpandStatus expand_layer(std::span<const ProbVector> distributions);

  // Best path of length min(depth, deepest alive layer below root): the chain
  // ending at the max-score node on that layer, ties by (token asc, id asc).
  QueryResult query(std::size_t depth) const;

  // ---------------------------------------------------------------------------
  // Correction
  // ---------------------------------------------------------------------------

  // Walks `accepted` from the root, pruning every sibling subtree off the
  // chain. A correction token found under the chain end becomes the new root
  // with its subtree kept; one that is absent resets the cache to a fresh
  // root. Without a correction token the chain end becomes the root. The
  // frontier keeps its surviving members. Throws ProtocolError when
  // `accepted` does not trace alive children. Returns the new root.
  NodeId correct(std::span<const TokenId> accepted, std::optional<TokenId> correction);

  // Query-only ablation: moves the root along `emitted` without pruning.
  // Returns false (and leaves the cache unchanged) when a token is not cached.
  bool advance_root(std::span<const TokenId> emitted);

  // Kills every node and starts over from a fresh, parentless root.
  NodeId reset(TokenId root_token);

  // Drops dead nodes and re-bases scores on the root. Invalidates handles.
  void compact();

  // Appends a child without any beam bookkeeping. Parent must be alive.
  NodeId append_child(NodeId parent, TokenId token, double log_prob);
  // Replaces the frontier; nodes must be alive and share a layer. Sorted and
  // truncated to K.
  void set_frontier(std::vector<NodeId> nodes);

  // Pre-order dump of the root's alive subtree, one "token:score" per line,
  // indented two spaces per layer.
  std::string dump() const;

  // Frontier order: (log_score desc, token asc, parent id asc).
  bool frontier_before(NodeId a, NodeId b) const;

 private:
  CacheNode& mut(NodeId id) { return nodes_[id.index()]; }
  NodeId push_node(NodeId parent, TokenId token, double log_prob);
  std::size_t kill_subtree(NodeId id);
  void prune_dead_end(NodeId id);
  void maybe_compact();
  void sort_frontier();
  void check_distribution(const ProbVector& dist) const;
  std::vector<CandidateTuple> candidates_for(std::size_t index, NodeId source,
                                             const ProbVector& dist) const;

  CacheConfig config_;
  std::vector<CacheNode> nodes_;
  std::vector<NodeId> frontier_;
  NodeId root_;
  NodeId origin_;
  std::size_t dead_ = 0;
};

}  // namespace card

#include "card/cache.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "card/parallel.hpp"

namespace card {

void CacheConfig::validate() const {
  if (width < 1) throw ConfigError("cache width K must be at least 1");
  if (branching < 1) throw ConfigError("expansion width k must be at least 1");
  if (max_depth < 1) throw ConfigError("cache max_depth must be at least 1");
  if (vocab_size < 2) throw ConfigError("vocabulary size must be at least 2");
  if (eos && (*eos < 0 || static_cast<std::size_t>(*eos) >= vocab_size)) {
    throw ConfigError("EOS token outside the vocabulary");
  }
}

TreeCache::TreeCache(CacheConfig config, TokenId root_token) : config_(std::move(config)) {
  config_.validate();
  if (root_token < 0 || static_cast<std::size_t>(root_token) >= config_.vocab_size) {
    throw InputError("root token outside the vocabulary");
  }
  CacheNode root;
  root.token = root_token;
  nodes_.push_back(root);
  root_ = origin_ = NodeId(0);
}

const CacheNode& TreeCache::node(NodeId id) const {
  if (!contains(id)) throw InputError("unknown cache node");
  return nodes_[id.index()];
}

std::int64_t TreeCache::layer(NodeId id) const {
  return static_cast<std::int64_t>(node(id).depth) - static_cast<std::int64_t>(nodes_[root_.index()].depth);
}

double TreeCache::log_score(NodeId id) const { return node(id).raw_score - nodes_[root_.index()].raw_score; }

std::int64_t TreeCache::frontier_depth() const {
  return frontier_.empty() ? layer(origin_) : layer(frontier_.front());
}

bool TreeCache::frontier_full() const {
  return frontier_depth() >= static_cast<std::int64_t>(config_.max_depth);
}

std::vector<NodeId> TreeCache::expansion_sources() const {
  if (frontier_.empty()) return {origin_};
  return frontier_;
}

std::vector<NodeId> TreeCache::children(NodeId id) const {
  std::vector<NodeId> out;
  for (NodeId c = node(id).first_child; c.valid(); c = nodes_[c.index()].next_sibling) {
    if (nodes_[c.index()].alive) out.push_back(c);
  }
  return out;
}

NodeId TreeCache::find_child(NodeId parent, TokenId token) const {
  for (NodeId c = node(parent).first_child; c.valid(); c = nodes_[c.index()].next_sibling) {
    const CacheNode& n = nodes_[c.index()];
    if (n.alive && n.token == token) return c;
  }
  return NodeId::none();
}

bool TreeCache::is_ancestor_or_self(NodeId ancestor, NodeId id) const {
  const auto target_depth = node(ancestor).depth;
  while (id.valid()) {
    const CacheNode& n = nodes_[id.index()];
    if (id == ancestor) return true;
    if (n.depth <= target_depth) return false;
    id = n.parent;
  }
  return false;
}

std::vector<NodeId> TreeCache::alive_below(NodeId anchor) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack = children(anchor);
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    out.push_back(id);
    for (NodeId c = nodes_[id.index()].first_child; c.valid(); c = nodes_[c.index()].next_sibling) {
      if (nodes_[c.index()].alive) stack.push_back(c);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ----------------------------------------------------------------------------
// Expansion
// ----------------------------------------------------------------------------

void TreeCache::check_distribution(const ProbVector& dist) const {
  if (dist.size() != config_.vocab_size) {
    throw InputError("distribution over " + std::to_string(dist.size()) + " tokens for a vocabulary of " +
                     std::to_string(config_.vocab_size));
  }
}

std::vector<CandidateTuple> TreeCache::candidates_for(std::size_t index, NodeId source,
                                                      const ProbVector& dist) const {
  const CacheNode& src = nodes_[source.index()];
  if (config_.eos && src.token == *config_.eos) return {};

  std::vector<TokenId> cached;
  for (NodeId c = src.first_child; c.valid(); c = nodes_[c.index()].next_sibling) {
    if (nodes_[c.index()].alive) cached.push_back(nodes_[c.index()].token);
  }

  std::vector<TokenId> support;
  support.reserve(dist.size());
  for (std::size_t t = 0; t < dist.size(); ++t) {
    const auto token = static_cast<TokenId>(t);
    if (dist[token] > 0.0 && std::find(cached.begin(), cached.end(), token) == cached.end()) {
      support.push_back(token);
    }
  }
  const std::size_t take = std::min(config_.branching, support.size());
  std::partial_sort(support.begin(), support.begin() + static_cast<std::ptrdiff_t>(take), support.end(),
                    [&](TokenId a, TokenId b) { return dist[a] != dist[b] ? dist[a] > dist[b] : a < b; });

  const double base = log_score(source);
  std::vector<CandidateTuple> out;
  out.reserve(take);
  for (std::size_t j = 0; j < take; ++j) {
    out.push_back(CandidateTuple{support[j], base + std::log(dist[support[j]]), index});
  }
  return out;
}

std::vector<CandidateTuple> TreeCache::build_candidate_pool(std::span<const NodeId> sources,
                                                            std::span<const ProbVector> distributions) const {
  if (sources.size() != distributions.size()) {
    throw InputError("expected " + std::to_string(sources.size()) + " distributions, got " +
                     std::to_string(distributions.size()));
  }
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (!alive(sources[i])) throw InputError("expansion source is not an alive node");
    check_distribution(distributions[i]);
  }
  std::vector<std::vector<CandidateTuple>> rows(sources.size());
  parallel_for(sources.size(), [&](std::size_t i) { rows[i] = candidates_for(i, sources[i], distributions[i]); });
  std::vector<CandidateTuple> pool;
  for (auto& row : rows) pool.insert(pool.end(), row.begin(), row.end());
  return pool;
}

std::vector<CandidateTuple> TreeCache::build_candidate_pool_serial(std::span<const NodeId> sources,
                                                                   std::span<const ProbVector> distributions) const {
  if (sources.size() != distributions.size()) {
    throw InputError("expected " + std::to_string(sources.size()) + " distributions, got " +
                     std::to_string(distributions.size()));
  }
  std::vector<CandidateTuple> pool;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (!alive(sources[i])) throw InputError("expansion source is not an alive node");
    check_distribution(distributions[i]);
    auto row = candidates_for(i, sources[i], distributions[i]);
    pool.insert(pool.end(), row.begin(), row.end());
  }
  return pool;
}

ExpandStatus TreeCache::expand_layer(std::span<const ProbVector> distributions) {
  if (frontier_full()) return ExpandStatus::kFrontierFull;
  const std::vector<NodeId> sources = expansion_sources();
  std::vector<CandidateTuple> pool = build_candidate_pool(sources, distributions);

  auto before = [&](const CandidateTuple& a, const CandidateTuple& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.token != b.token) return a.token < b.token;
    return sources[a.parent_index] < sources[b.parent_index];
  };
  const std::size_t keep = std::min(config_.width, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), before);

  std::vector<std::size_t> wins(sources.size(), 0);
  std::vector<NodeId> next;
  next.reserve(keep);
  for (std::size_t m = 0; m < keep; ++m) {
    const CandidateTuple& c = pool[m];
    const ProbVector& dist = distributions[c.parent_index];
    next.push_back(push_node(sources[c.parent_index], c.token, std::log(dist[c.token])));
    ++wins[c.parent_index];
  }
  frontier_ = std::move(next);
  sort_frontier();

  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (wins[i] == 0) prune_dead_end(sources[i]);
  }
  maybe_compact();
  return ExpandStatus::kExpanded;
}

// ----------------------------------------------------------------------------
// Query
// ----------------------------------------------------------------------------

QueryResult TreeCache::query(std::size_t depth) const {
  if (depth == 0) throw InputError("query depth must be at least 1");
  QueryResult result;
  if (children(root_).empty()) return result;

  std::vector<NodeId> best(depth + 1, NodeId::none());
  auto better = [&](NodeId a, NodeId b) {
    const CacheNode& na = nodes_[a.index()];
    const CacheNode& nb = nodes_[b.index()];
    if (na.raw_score != nb.raw_score) return na.raw_score > nb.raw_score;
    if (na.token != nb.token) return na.token < nb.token;
    return a < b;
  };

  std::vector<std::pair<NodeId, std::size_t>> stack;
  for (NodeId c : children(root_)) stack.emplace_back(c, 1);
  std::size_t deepest = 0;
  while (!stack.empty()) {
    const auto [id, level] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, level);
    if (!best[level].valid() || better(id, best[level])) best[level] = id;
    if (level == depth) continue;
    for (NodeId c = nodes_[id.index()].first_child; c.valid(); c = nodes_[c.index()].next_sibling) {
      if (nodes_[c.index()].alive) stack.emplace_back(c, level + 1);
    }
  }

  result.hit = true;
  for (NodeId id = best[deepest]; id != root_; id = nodes_[id.index()].parent) result.path.push_back(id);
  std::reverse(result.path.begin(), result.path.end());
  for (NodeId id : result.path) {
    result.tokens.push_back(nodes_[id.index()].token);
    result.log_probs.push_back(nodes_[id.index()].edge_log_prob);
  }
  return result;
}

// ----------------------------------------------------------------------------
// Correction
// ----------------------------------------------------------------------------

NodeId TreeCache::correct(std::span<const TokenId> accepted, std::optional<TokenId> correction) {
  std::vector<NodeId> chain;
  for (NodeId id = root_; id != origin_; id = nodes_[id.index()].parent) chain.push_back(id);
  std::reverse(chain.begin(), chain.end());
  NodeId cur = root_;
  for (TokenId t : accepted) {
    cur = find_child(cur, t);
    if (!cur.valid()) throw ProtocolError("accepted tokens do not trace an alive chain from the root");
    chain.push_back(cur);
  }
  if (correction && (*correction < 0 || static_cast<std::size_t>(*correction) >= config_.vocab_size)) {
    throw InputError("correction token outside the vocabulary");
  }

  auto prune_siblings = [&](NodeId parent, NodeId keep) {
    for (NodeId c = nodes_[parent.index()].first_child; c.valid(); c = nodes_[c.index()].next_sibling) {
      if (c != keep && nodes_[c.index()].alive) kill_subtree(c);
    }
  };

  NodeId parent = origin_;
  for (NodeId id : chain) {
    prune_siblings(parent, id);
    parent = id;
  }
  NodeId new_root = parent;
  if (correction) {
    const NodeId hit = find_child(parent, *correction);
    if (!hit.valid()) return reset(*correction);
    prune_siblings(parent, hit);
    new_root = hit;
  }

  root_ = origin_ = new_root;
  // The correction may land on the frontier itself; only nodes strictly below
  // the new root can be expanded.
  std::erase_if(frontier_, [&](NodeId id) { return !nodes_[id.index()].alive || layer(id) <= 0; });
  if (frontier_.size() > config_.width) frontier_.resize(config_.width);
  maybe_compact();
  return root_;
}

bool TreeCache::advance_root(std::span<const TokenId> emitted) {
  NodeId cur = root_;
  for (TokenId t : emitted) {
    cur = find_child(cur, t);
    if (!cur.valid()) return false;
  }
  root_ = cur;
  return true;
}

NodeId TreeCache::reset(TokenId root_token) {
  if (root_token < 0 || static_cast<std::size_t>(root_token) >= config_.vocab_size) {
    throw InputError("root token outside the vocabulary");
  }
  for (CacheNode& n : nodes_) n.alive = false;
  dead_ = nodes_.size();
  CacheNode fresh;
  fresh.token = root_token;
  nodes_.push_back(fresh);
  root_ = origin_ = NodeId(static_cast<std::uint32_t>(nodes_.size() - 1));
  frontier_.clear();
  maybe_compact();
  return root_;
}

// ----------------------------------------------------------------------------
// Arena maintenance
// ----------------------------------------------------------------------------

NodeId TreeCache::push_node(NodeId parent, TokenId token, double log_prob) {
  if (nodes_.size() >= NodeId::kNone) throw Error("cache arena exhausted");
  const NodeId id(static_cast<std::uint32_t>(nodes_.size()));
  CacheNode n;
  n.token = token;
  n.parent = parent;
  n.depth = nodes_[parent.index()].depth + 1;
  n.raw_score = nodes_[parent.index()].raw_score + log_prob;
  n.edge_log_prob = log_prob;
  nodes_.push_back(n);
  CacheNode& p = nodes_[parent.index()];
  if (p.last_child.valid()) {
    nodes_[p.last_child.index()].next_sibling = id;
  } else {
    p.first_child = id;
  }
  p.last_child = id;
  return id;
}

NodeId TreeCache::append_child(NodeId parent, TokenId token, double log_prob) {
  if (!alive(parent)) throw InputError("append_child: parent is not alive");
  if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab_size) {
    throw InputError("append_child: token outside the vocabulary");
  }
  if (!(log_prob <= 0.0) || std::isinf(log_prob)) throw InputError("append_child: log_prob must be finite and <= 0");
  if (find_child(parent, token).valid()) throw InputError("append_child: token already cached under parent");
  return push_node(parent, token, log_prob);
}

void TreeCache::set_frontier(std::vector<NodeId> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!alive(ids[i])) throw InputError("set_frontier: node is not alive");
    if (nodes_[ids[i].index()].depth != nodes_[ids.front().index()].depth) {
      throw InputError("set_frontier: nodes span several layers");
    }
    if (std::find(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(i), ids[i]) !=
        ids.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw InputError("set_frontier: duplicate node");
    }
  }
  frontier_ = std::move(ids);
  sort_frontier();
  if (frontier_.size() > config_.width) frontier_.resize(config_.width);
}

bool TreeCache::frontier_before(NodeId a, NodeId b) const {
  const CacheNode& na = nodes_[a.index()];
  const CacheNode& nb = nodes_[b.index()];
  if (na.raw_score != nb.raw_score) return na.raw_score > nb.raw_score;
  if (na.token != nb.token) return na.token < nb.token;
  return na.parent < nb.parent;
}

void TreeCache::sort_frontier() {
  std::stable_sort(frontier_.begin(), frontier_.end(), [&](NodeId a, NodeId b) { return frontier_before(a, b); });
}

std::size_t TreeCache::kill_subtree(NodeId id) {
  std::size_t killed = 0;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const NodeId cur = stack.back();
    stack.pop_back();
    CacheNode& n = mut(cur);
    if (!n.alive) continue;
    n.alive = false;
    ++killed;
    for (NodeId c = n.first_child; c.valid(); c = nodes_[c.index()].next_sibling) stack.push_back(c);
  }
  dead_ += killed;
  return killed;
}

void TreeCache::prune_dead_end(NodeId id) {
  while (id.valid() && id != origin_ && nodes_[id.index()].alive && children(id).empty() &&
         !is_ancestor_or_self(id, root_)) {
    mut(id).alive = false;
    ++dead_;
    id = nodes_[id.index()].parent;
  }
}

void TreeCache::maybe_compact() {
  if (static_cast<double>(dead_) > kCompactionDeadFraction * static_cast<double>(nodes_.size())) compact();
}

void TreeCache::compact() {
  std::vector<std::uint32_t> remap(nodes_.size(), NodeId::kNone);
  std::vector<CacheNode> kept;
  kept.reserve(alive_count());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].alive) continue;
    remap[i] = static_cast<std::uint32_t>(kept.size());
    kept.push_back(nodes_[i]);
  }
  auto map_id = [&](NodeId id) { return id.valid() ? NodeId(remap[id.index()]) : id; };
  const double base = nodes_[root_.index()].raw_score;
  for (CacheNode& n : kept) {
    n.parent = map_id(n.parent);
    n.first_child = n.last_child = n.next_sibling = NodeId::none();
    n.raw_score -= base;
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const NodeId p = kept[i].parent;
    if (!p.valid()) continue;
    const NodeId id(static_cast<std::uint32_t>(i));
    CacheNode& parent = kept[p.index()];
    if (parent.last_child.valid()) {
      kept[parent.last_child.index()].next_sibling = id;
    } else {
      parent.first_child = id;
    }
    parent.last_child = id;
  }
  root_ = map_id(root_);
  origin_ = map_id(origin_);
  for (NodeId& f : frontier_) f = map_id(f);
  nodes_ = std::move(kept);
  dead_ = 0;
}

std::string TreeCache::dump() const {
  std::string out;
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    const auto depth = static_cast<std::size_t>(layer(id));
    double score = log_score(id);
    if (std::abs(score) < 5e-7) score = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d:%.6f\n", nodes_[id.index()].token, score);
    out.append(2 * depth, ' ');
    out += buf;
    const auto kids = children(id);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

}  // namespace card

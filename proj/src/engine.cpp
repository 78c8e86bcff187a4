#include "card/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "card/cache.hpp"
#include "card/mask.hpp"
#include "card/rng.hpp"
#include "card/verify.hpp"

namespace card {

std::string_view to_string(Mode mode) {
  return mode == Mode::kSerialSim ? "serial_sim" : "concurrent";
}

std::optional<Mode> parse_mode(std::string_view text) {
  if (text == "serial_sim") return Mode::kSerialSim;
  if (text == "concurrent") return Mode::kConcurrent;
  return std::nullopt;
}

std::size_t communication_ratio(double target_latency, double draft_latency) {
  if (!(std::isfinite(target_latency) && target_latency > 0.0) ||
      !(std::isfinite(draft_latency) && draft_latency > 0.0)) {
    throw InputError("communication_ratio: latencies must be positive and finite");
  }
  const double q = target_latency / draft_latency;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(q - 1e-9 * q)));
}

ResolvedConfig resolve(const EngineConfig& c, const ModelSpec& target, const ModelSpec& draft) {
  target.validate();
  draft.validate();
  if (c.width < 1) throw ConfigError("K must be at least 1");
  if (c.branching < 1) throw ConfigError("k must be at least 1");
  if (c.max_new_tokens < 1) throw ConfigError("max_new_tokens must be at least 1");
  if (!std::isfinite(c.temperature) || c.temperature < 0.0) throw ConfigError("temperature must be >= 0");
  if (c.ratio && *c.ratio < 1) throw ConfigError("ratio must be at least 1");
  if (c.query_depth && *c.query_depth < 1) throw ConfigError("query_depth must be at least 1");
  if (c.max_depth && *c.max_depth < 1) throw ConfigError("max_depth must be at least 1");

  ResolvedConfig r;
  r.width = c.width;
  r.branching = c.branching;
  r.ratio = c.ratio.value_or(communication_ratio(target.forward_latency, draft.forward_latency));
  r.temperature = c.temperature;
  r.max_new_tokens = c.max_new_tokens;
  r.mode = c.mode;
  r.correction_enabled = c.correction_enabled;
  r.seed = c.seed;
  r.query_depth = c.query_depth.value_or(r.ratio);
  r.max_depth = c.max_depth.value_or(std::max(2 * r.ratio, r.query_depth));
  if (r.query_depth > r.max_depth) throw ConfigError("query_depth must not exceed max_depth");
  return r;
}

namespace {

void check_prompt(std::span<const TokenId> prompt, const Model& model) {
  if (prompt.empty()) throw InputError("prompt is empty");
  for (TokenId t : prompt) {
    if (!model.in_vocab(t)) throw InputError("prompt token " + std::to_string(t) + " outside the vocabulary");
  }
}

// Runs one draft forward + expand_layer. Returns the batch width, or 0 when
// the frontier is full.
std::size_t draft_step(TreeCache& cache, const Model& draft, std::span<const TokenId> base) {
  if (cache.frontier_full()) return 0;
  std::vector<ProbVector> dists;
  if (cache.frontier().empty()) {
    dists.push_back(draft.next_distribution(base));
  } else {
    const TreeBatch batch = build_frontier_batch(cache);
    dists = batch_tree_forward(draft, base, batch.tokens, batch.mask);
  }
  cache.expand_layer(dists);
  return dists.size();
}

struct TargetStep {
  bool hit = false;
  std::size_t candidate_len = 0;
  std::size_t lnew = 1;
  std::vector<TokenId> accepted;
  TokenId correction = 0;
  std::vector<TokenId> emitted;
  bool stop = false;
};

// Verification (hit) or plain decode (miss), then truncation to the token
// budget and at EOS.
TargetStep target_step(const QueryResult& q, const Model& target, std::span<const TokenId> context,
                       const ResolvedConfig& rc, std::size_t budget, Rng& rng) {
  TargetStep s;
  s.hit = q.hit;
  if (q.hit) {
    const auto dists = chain_forward(target, context, q.tokens);
    VerifyOutcome outcome;
    if (rc.temperature == 0.0) {
      outcome = verify_greedy(dists, q.tokens);
    } else {
      // The cache proposes its best path deterministically, so each proposal
      // is a point mass on the candidate token.
      std::vector<ProbVector> proposals;
      proposals.reserve(q.tokens.size());
      for (TokenId t : q.tokens) proposals.push_back(ProbVector::one_hot(target.vocab_size(), t));
      outcome = verify_sampling(dists, proposals, q.tokens, rc.temperature, rng);
    }
    s.candidate_len = q.tokens.size();
    s.lnew = outcome.lnew;
    s.accepted = outcome.accepted;
    s.correction = outcome.correction;
    s.emitted = outcome.accepted;
    s.emitted.push_back(outcome.correction);
  } else {
    const ProbVector dist = target.next_distribution(context);
    const TokenId t = rc.temperature == 0.0 ? dist.argmax() : rng.categorical(dist.probs());
    s.correction = t;
    s.emitted = {t};
  }

  if (s.emitted.size() >= budget) {
    s.emitted.resize(budget);
    s.stop = true;
  }
  if (const auto eos = target.eos()) {
    if (auto it = std::find(s.emitted.begin(), s.emitted.end(), *eos); it != s.emitted.end()) {
      s.emitted.erase(it + 1, s.emitted.end());
      s.stop = true;
    }
  }
  return s;
}

bool traces(const TreeCache& cache, std::span<const TokenId> tokens) {
  NodeId cur = cache.root();
  for (TokenId t : tokens) {
    cur = cache.find_child(cur, t);
    if (!cur.valid()) return false;
  }
  return true;
}

// Steers (or, in the ablation, merely re-anchors) the cache after the target
// emitted `s.emitted`. `context_len` is the context length after emission.
void apply_feedback(TreeCache& cache, const TargetStep& s, bool correction_enabled, std::size_t context_len,
                    std::size_t& origin_len, bool tolerate_stale_path) {
  if (correction_enabled) {
    if (tolerate_stale_path && !traces(cache, s.accepted)) {
      cache.reset(s.emitted.back());
    } else {
      cache.correct(s.accepted, s.correction);
    }
    origin_len = context_len;
    return;
  }
  if (!cache.advance_root(s.emitted)) {
    cache.reset(s.emitted.back());
    origin_len = context_len;
  }
}

StepTrace make_event(TraceEvent ev, double time, const TreeCache& cache) {
  StepTrace t;
  t.event = ev;
  t.sim_time = time;
  t.cache_alive_nodes = cache.alive_count();
  return t;
}

StepTrace target_event(const TargetStep& s, double time, const TreeCache& cache) {
  StepTrace t = make_event(s.hit ? TraceEvent::kVerify : TraceEvent::kMissStep, time, cache);
  t.hit = s.hit;
  t.candidate_len = s.candidate_len;
  t.accepted_len = s.emitted.size() - 1;
  t.lnew = s.lnew;
  return t;
}

struct Prepared {
  ResolvedConfig rc;
  ModelPtr draft;
  ModelPtr target;
  CacheConfig cache_config;
};

Prepared prepare(const EngineConfig& config, std::span<const TokenId> prompt, const ModelPtr& draft,
                 const ModelPtr& target) {
  if (!draft || !target) throw ConfigError("draft and target models are required");
  if (draft->vocab_size() != target->vocab_size()) {
    throw ConfigError("draft vocabulary (" + std::to_string(draft->vocab_size()) + ") differs from target (" +
                      std::to_string(target->vocab_size()) + ")");
  }
  check_prompt(prompt, *target);
  Prepared p;
  p.rc = resolve(config, target->spec(), draft->spec());
  p.draft = p.rc.temperature > 0.0 ? with_temperature(draft, p.rc.temperature) : draft;
  p.target = p.rc.temperature > 0.0 ? with_temperature(target, p.rc.temperature) : target;
  p.cache_config = CacheConfig{p.rc.width, p.rc.branching, p.rc.max_depth, target->vocab_size(), target->eos()};
  return p;
}

void sort_trace(std::vector<StepTrace>& trace) {
  std::stable_sort(trace.begin(), trace.end(),
                   [](const StepTrace& a, const StepTrace& b) { return a.sim_time < b.sim_time; });
  for (std::size_t i = 0; i < trace.size(); ++i) trace[i].step_index = i;
}

RunResult finish(RunResult result, const Prepared& p, std::chrono::steady_clock::time_point start) {
  sort_trace(result.trace);
  const double vanilla_time = static_cast<double>(result.tokens.size()) * p.target->spec().forward_latency;
  result.metrics = finalize(result.trace, p.target->spec(), p.draft->spec(), vanilla_time);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ----------------------------------------------------------------------------
// serial_sim
// ----------------------------------------------------------------------------

RunResult run_serial(const Prepared& p, std::span<const TokenId> prompt) {
  const auto start = std::chrono::steady_clock::now();
  const ResolvedConfig& rc = p.rc;
  const double t_lat = p.target->spec().forward_latency;
  const double d_lat = p.draft->spec().forward_latency;
  // Expansions that fit inside one target forward.
  const auto fit = static_cast<std::size_t>(std::floor(t_lat / d_lat * (1.0 + 1e-9)));

  RunResult result;
  Rng rng(rc.seed);
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  std::size_t origin_len = context.size();
  TreeCache cache(p.cache_config, context.back());
  double clock = 0.0;

  auto expand = [&](double at) {
    const std::size_t width = draft_step(cache, *p.draft, std::span<const TokenId>(context).first(origin_len));
    if (width == 0) return false;
    StepTrace ev = make_event(TraceEvent::kDraftExpand, at, cache);
    ev.width = width;
    result.trace.push_back(ev);
    return true;
  };

  for (std::size_t i = 0; i < rc.query_depth; ++i) {
    if (!expand(clock + d_lat)) break;
    clock += d_lat;
  }

  while (result.tokens.size() < rc.max_new_tokens) {
    const double cycle_start = clock;
    const std::int64_t depth_before = cache.frontier_depth();
    const std::size_t budget =
        depth_before >= static_cast<std::int64_t>(rc.query_depth) ? std::min(rc.ratio, fit) : rc.ratio;
    std::size_t expansions = 0;
    while (expansions < budget && expand(cycle_start + static_cast<double>(expansions + 1) * d_lat)) ++expansions;

    const double draft_work = static_cast<double>(expansions) * d_lat;
    const double cycle_end = cycle_start + std::max(draft_work, t_lat);
    const std::int64_t depth_at_query = cache.frontier_depth();

    const QueryResult q = cache.query(rc.query_depth);
    const TargetStep s =
        target_step(q, *p.target, context, rc, rc.max_new_tokens - result.tokens.size(), rng);

    context.insert(context.end(), s.emitted.begin(), s.emitted.end());
    result.tokens.insert(result.tokens.end(), s.emitted.begin(), s.emitted.end());

    StepTrace ev = target_event(s, cycle_end, cache);
    ev.cache_depth = depth_at_query;
    ev.target_idle = std::max(0.0, draft_work - t_lat);
    result.trace.push_back(ev);
    clock = cycle_end;
    if (s.stop) break;

    apply_feedback(cache, s, rc.correction_enabled, context.size(), origin_len, false);
    result.trace.push_back(make_event(TraceEvent::kCorrect, cycle_end, cache));
  }
  return finish(std::move(result), p, start);
}

// ----------------------------------------------------------------------------
// concurrent
// ----------------------------------------------------------------------------

RunResult run_concurrent(const Prepared& p, std::span<const TokenId> prompt) {
  const auto start = std::chrono::steady_clock::now();
  const ResolvedConfig& rc = p.rc;
  const double t_lat = p.target->spec().forward_latency;
  const double d_lat = p.draft->spec().forward_latency;

  RunResult result;
  Rng rng(rc.seed);
  std::mutex mu;
  std::condition_variable cv;
  bool stop = false;
  // Set when an expansion left the frontier empty; repeating it would rebuild
  // the same layer, so the draft waits for the next feedback instead.
  bool stalled = false;
  std::uint64_t feedback_count = 0;
  std::exception_ptr draft_failure;

  std::vector<TokenId> context(prompt.begin(), prompt.end());
  std::size_t origin_len = context.size();
  TreeCache cache(p.cache_config, context.back());
  double draft_clock = 0.0;
  double target_clock = 0.0;

  std::thread drafter([&] {
    std::unique_lock lock(mu);
    try {
      while (!stop) {
        if (cache.frontier_full()) {
          cv.wait(lock, [&] { return stop || !cache.frontier_full(); });
          continue;
        }
        // Non-preemptive: the layer completes before a correction can land.
        const std::size_t width = draft_step(cache, *p.draft, std::span<const TokenId>(context).first(origin_len));
        draft_clock += d_lat;
        StepTrace ev = make_event(TraceEvent::kDraftExpand, draft_clock, cache);
        ev.width = width;
        result.trace.push_back(ev);
        if (cache.frontier().empty()) {
          stalled = true;
          const std::uint64_t seen = feedback_count;
          cv.notify_all();
          cv.wait(lock, [&] { return stop || feedback_count != seen; });
          stalled = false;
          continue;
        }
        cv.notify_all();
        lock.unlock();
        std::this_thread::yield();
        lock.lock();
      }
    } catch (...) {
      draft_failure = std::current_exception();
      stop = true;
      cv.notify_all();
    }
  });

  auto shutdown = [&] {
    {
      std::lock_guard guard(mu);
      stop = true;
    }
    cv.notify_all();
    if (drafter.joinable()) drafter.join();
  };

  try {
    {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] {
        return stop || stalled || cache.frontier_full() ||
               cache.frontier_depth() >= static_cast<std::int64_t>(rc.query_depth);
      });
      target_clock = std::max(target_clock, draft_clock);
    }
    while (result.tokens.size() < rc.max_new_tokens) {
      QueryResult q;
      std::vector<TokenId> snapshot;
      std::int64_t depth_at_query = 0;
      {
        std::lock_guard guard(mu);
        if (draft_failure) break;
        q = cache.query(rc.query_depth);
        snapshot = context;
        depth_at_query = cache.frontier_depth();
      }
      const TargetStep s =
          target_step(q, *p.target, snapshot, rc, rc.max_new_tokens - result.tokens.size(), rng);
      std::lock_guard guard(mu);
      context.insert(context.end(), s.emitted.begin(), s.emitted.end());
      result.tokens.insert(result.tokens.end(), s.emitted.begin(), s.emitted.end());
      target_clock += t_lat;
      StepTrace ev = target_event(s, target_clock, cache);
      ev.cache_depth = depth_at_query;
      result.trace.push_back(ev);
      if (s.stop) break;
      apply_feedback(cache, s, rc.correction_enabled, context.size(), origin_len, true);
      ++feedback_count;
      result.trace.push_back(make_event(TraceEvent::kCorrect, target_clock, cache));
      cv.notify_all();
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  if (draft_failure) std::rethrow_exception(draft_failure);
  return finish(std::move(result), p, start);
}

}  // namespace

RunResult run_card(const EngineConfig& config, std::span<const TokenId> prompt, const ModelPtr& draft,
                   const ModelPtr& target) {
  const Prepared p = prepare(config, prompt, draft, target);
  return p.rc.mode == Mode::kSerialSim ? run_serial(p, prompt) : run_concurrent(p, prompt);
}

RunResult run_vanilla(std::span<const TokenId> prompt, const ModelPtr& target, std::size_t max_new_tokens,
                      double temperature, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  if (!target) throw ConfigError("target model is required");
  check_prompt(prompt, *target);
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be at least 1");
  if (!std::isfinite(temperature) || temperature < 0.0) throw ConfigError("temperature must be >= 0");
  const ModelPtr model = temperature > 0.0 ? with_temperature(target, temperature) : target;
  const double t_lat = model->spec().forward_latency;

  RunResult result;
  Rng rng(seed);
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    const ProbVector dist = model->next_distribution(context);
    const TokenId t = temperature == 0.0 ? dist.argmax() : rng.categorical(dist.probs());
    context.push_back(t);
    result.tokens.push_back(t);
    StepTrace ev;
    ev.step_index = step;
    ev.event = TraceEvent::kMissStep;
    ev.sim_time = static_cast<double>(step + 1) * t_lat;
    ev.lnew = 1;
    result.trace.push_back(ev);
    if (model->eos() && t == *model->eos()) break;
  }
  const double sim_time = static_cast<double>(result.tokens.size()) * t_lat;
  result.metrics = finalize(result.trace, model->spec(), model->spec(), sim_time);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace card

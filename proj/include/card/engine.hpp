#pragma once

// Query-and-correct orchestration.
//
// serial_sim (reference semantics), one cycle:
//   (a) the draft performs up to `ratio` expand_layer calls;
//   (b) the target queries the cache at query_depth;
//   (c) hit: one target forward over the candidate chain, verification,
//       emit accepted + correction; miss: one plain autoregressive step;
//   (d) correct the cache, or in the query-only ablation advance the root
//       along cached children and reset on divergence.
// The virtual clock advances by max(draft work, target work) per cycle. When
// the cache already holds query_depth layers before (a), the draft only runs
// the expansions that fit inside one target forward.
//
// concurrent: a draft thread and a verifier thread share the cache under a
// mutex; corrections land between draft expansions.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "card/lm.hpp"
#include "card/metrics.hpp"
#include "card/types.hpp"

namespace card {

enum class Mode { kSerialSim, kConcurrent };

std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);

struct EngineConfig {
  std::size_t width = 50;      // K
  std::size_t branching = 8;   // k
  std::optional<std::size_t> ratio;  // derived from model latencies when unset
  double temperature = 0.0;    // 0 = greedy
  std::size_t max_new_tokens = 512;
  Mode mode = Mode::kSerialSim;
  bool correction_enabled = true;
  std::uint64_t seed = 0;
  std::optional<std::size_t> query_depth;  // default: ratio
  std::optional<std::size_t> max_depth;    // default: max(2 * ratio, query_depth)
};

// EngineConfig with every default filled in.
struct ResolvedConfig {
  std::size_t width = 0;
  std::size_t branching = 0;
  std::size_t ratio = 0;
  double temperature = 0.0;
  std::size_t max_new_tokens = 0;
  Mode mode = Mode::kSerialSim;
  bool correction_enabled = true;
  std::uint64_t seed = 0;
  std::size_t query_depth = 0;
  std::size_t max_depth = 0;
};

// Throws ConfigError on an invalid configuration.
ResolvedConfig resolve(const EngineConfig& config, const ModelSpec& target, const ModelSpec& draft);

// ceil(target_latency / draft_latency), with a relative tolerance of 1e-9 so
// quotients that are integral up to round-off are not bumped up. Throws
// InputError on non-positive or non-finite latencies.
std::size_t communication_ratio(double target_latency, double draft_latency);

struct RunResult {
  std::vector<TokenId> tokens;  // generated tokens (prompt excluded)
  RunMetrics metrics;
  std::vector<StepTrace> trace;
  double wall_seconds = 0.0;
};

// Throws InputError on an empty or out-of-vocabulary prompt and ConfigError
// on a vocabulary mismatch or invalid configuration.
RunResult run_card(const EngineConfig& config, std::span<const TokenId> prompt, const ModelPtr& draft,
                   const ModelPtr& target);

// Plain autoregressive decoding; sim_time = steps * target latency.
RunResult run_vanilla(std::span<const TokenId> prompt, const ModelPtr& target,
                      std::size_t max_new_tokens, double temperature, std::uint64_t seed);

}  // namespace card

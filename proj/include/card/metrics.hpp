#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "card/types.hpp"

namespace card {

enum class TraceEvent { kVerify, kMissStep, kDraftExpand, kCorrect };

std::string_view to_string(TraceEvent event);

// One engine event on the simulated clock.
struct StepTrace {
  std::size_t step_index = 0;
  double sim_time = 0.0;
  TraceEvent event = TraceEvent::kVerify;
  bool hit = false;
  std::size_t candidate_len = 0;
  std::size_t accepted_len = 0;  // committed tokens - 1 on verify/miss events
  std::size_t lnew = 0;
  std::size_t cache_alive_nodes = 0;
  std::size_t width = 0;          // draft batch rows (draft_expand only)
  std::int64_t cache_depth = 0;   // frontier layer at query time
  double target_idle = 0.0;       // time the target waited for the draft this cycle
};

struct RunMetrics {
  std::size_t tokens_emitted = 0;
  double sim_time = 0.0;
  std::size_t target_forwards = 0;
  std::size_t draft_forwards = 0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  double mean_acceptance_length = 0.0;
  double cache_hit_rate = 0.0;
  double tokens_per_time = 0.0;
  double speedup_vs_vanilla = 0.0;
  double params_x_lnew = 0.0;
  double draft_params_x_width = 0.0;

  // Sums kept so per-prompt records can be aggregated exactly.
  double vanilla_time = 0.0;
  std::size_t lnew_total = 0;
  std::size_t width_total = 0;
};

// Field names of the flat record, in serialization order.
const std::vector<std::string>& metric_field_names();

// Computes RunMetrics from a time-ordered, non-empty trace. Throws
// InputError otherwise.
RunMetrics finalize(std::span<const StepTrace> trace, const ModelSpec& target_spec,
                    const ModelSpec& draft_spec, double vanilla_time);

// Pools several runs: counts and times are summed, ratios recomputed from the
// sums.
RunMetrics aggregate(std::span<const RunMetrics> runs, const ModelSpec& target_spec,
                     const ModelSpec& draft_spec);

// Value of a field named in metric_field_names().
double metric_value(const RunMetrics& m, std::string_view field);

}  // namespace card

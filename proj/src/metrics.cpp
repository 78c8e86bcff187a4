#include "card/metrics.hpp"

namespace card {

std::string_view to_string(TraceEvent event) {
  switch (event) {
    case TraceEvent::kVerify: return "verify";
    case TraceEvent::kMissStep: return "miss_step";
    case TraceEvent::kDraftExpand: return "draft_expand";
    case TraceEvent::kCorrect: return "correct";
  }
  return "unknown";
}

const std::vector<std::string>& metric_field_names() {
  static const std::vector<std::string> names = {
      "tokens_emitted",       "sim_time",       "target_forwards",    "draft_forwards",
      "hits",                 "misses",         "mean_acceptance_length",
      "cache_hit_rate",       "tokens_per_time", "speedup_vs_vanilla", "params_x_lnew",
      "draft_params_x_width",
  };
  return names;
}

namespace {

void derive_ratios(RunMetrics& m, const ModelSpec& target_spec, const ModelSpec& draft_spec) {
  const auto forwards = static_cast<double>(m.target_forwards);
  m.mean_acceptance_length = m.target_forwards ? static_cast<double>(m.tokens_emitted) / forwards : 0.0;
  const std::size_t queries = m.hits + m.misses;
  m.cache_hit_rate = queries ? static_cast<double>(m.hits) / static_cast<double>(queries) : 0.0;
  m.tokens_per_time = m.sim_time > 0.0 ? static_cast<double>(m.tokens_emitted) / m.sim_time : 0.0;
  m.speedup_vs_vanilla = m.sim_time > 0.0 ? m.vanilla_time / m.sim_time : 0.0;
  m.params_x_lnew = m.target_forwards ? target_spec.params_billions * (static_cast<double>(m.lnew_total) / forwards) : 0.0;
  m.draft_params_x_width =
      m.draft_forwards ? draft_spec.params_billions *
                             (static_cast<double>(m.width_total) / static_cast<double>(m.draft_forwards))
                       : 0.0;
}

}  // namespace

RunMetrics finalize(std::span<const StepTrace> trace, const ModelSpec& target_spec, const ModelSpec& draft_spec,
                    double vanilla_time) {
  if (trace.empty()) throw InputError("finalize: empty trace");
  RunMetrics m;
  double last_time = trace.front().sim_time;
  for (const StepTrace& s : trace) {
    if (s.sim_time < last_time) throw InputError("finalize: trace is not time-ordered");
    last_time = s.sim_time;
    switch (s.event) {
      case TraceEvent::kVerify:
        ++m.hits;
        ++m.target_forwards;
        m.tokens_emitted += s.accepted_len + 1;
        m.lnew_total += s.lnew;
        break;
      case TraceEvent::kMissStep:
        ++m.misses;
        ++m.target_forwards;
        m.tokens_emitted += 1;
        m.lnew_total += s.lnew;
        break;
      case TraceEvent::kDraftExpand:
        ++m.draft_forwards;
        m.width_total += s.width;
        break;
      case TraceEvent::kCorrect:
        break;
    }
  }
  m.sim_time = last_time;
  m.vanilla_time = vanilla_time;
  derive_ratios(m, target_spec, draft_spec);
  return m;
}

RunMetrics aggregate(std::span<const RunMetrics> runs, const ModelSpec& target_spec, const ModelSpec& draft_spec) {
  RunMetrics m;
  for (const RunMetrics& r : runs) {
    m.tokens_emitted += r.tokens_emitted;
    m.sim_time += r.sim_time;
    m.target_forwards += r.target_forwards;
    m.draft_forwards += r.draft_forwards;
    m.hits += r.hits;
    m.misses += r.misses;
    m.vanilla_time += r.vanilla_time;
    m.lnew_total += r.lnew_total;
    m.width_total += r.width_total;
  }
  derive_ratios(m, target_spec, draft_spec);
  return m;
}

double metric_value(const RunMetrics& m, std::string_view field) {
  if (field == "tokens_emitted") return static_cast<double>(m.tokens_emitted);
  if (field == "sim_time") return m.sim_time;
  if (field == "target_forwards") return static_cast<double>(m.target_forwards);
  if (field == "draft_forwards") return static_cast<double>(m.draft_forwards);
  if (field == "hits") return static_cast<double>(m.hits);
  if (field == "misses") return static_cast<double>(m.misses);
  if (field == "mean_acceptance_length") return m.mean_acceptance_length;
  if (field == "cache_hit_rate") return m.cache_hit_rate;
  if (field == "tokens_per_time") return m.tokens_per_time;
  if (field == "speedup_vs_vanilla") return m.speedup_vs_vanilla;
  if (field == "params_x_lnew") return m.params_x_lnew;
  if (field == "draft_params_x_width") return m.draft_params_x_width;
  throw InputError("unknown metric field '" + std::string(field) + "'");
}

}  // namespace card

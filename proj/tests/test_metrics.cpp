#include <gtest/gtest.h>

#include "card/metrics.hpp"

using namespace card;

namespace {

StepTrace event(TraceEvent kind, double time, std::size_t accepted = 0, std::size_t lnew = 1,
                std::size_t width = 0) {
  StepTrace s;
  s.event = kind;
  s.sim_time = time;
  s.accepted_len = accepted;
  s.lnew = lnew;
  s.width = width;
  s.hit = kind == TraceEvent::kVerify;
  return s;
}

}  // namespace

TEST(Finalize, CountsAndRatios) {
  // Ten verifications committing 47 tokens in total.
  std::vector<StepTrace> trace;
  const std::size_t accepted[] = {4, 3, 5, 2, 6, 3, 4, 4, 3, 3};
  double t = 0;
  for (std::size_t a : accepted) {
    trace.push_back(event(TraceEvent::kDraftExpand, t + 5, 0, 0, 8));
    t += 70;
    trace.push_back(event(TraceEvent::kVerify, t, a, 7));
    trace.push_back(event(TraceEvent::kCorrect, t));
  }
  const RunMetrics m = finalize(trace, ModelSpec{70, 70}, ModelSpec{7, 10}, 47 * 70.0);
  EXPECT_EQ(m.tokens_emitted, 47u);
  EXPECT_EQ(m.target_forwards, 10u);
  EXPECT_DOUBLE_EQ(m.mean_acceptance_length, 4.7);
  EXPECT_DOUBLE_EQ(m.cache_hit_rate, 1.0);
  EXPECT_DOUBLE_EQ(m.sim_time, 700.0);
  EXPECT_DOUBLE_EQ(m.speedup_vs_vanilla, 4.7);
  EXPECT_DOUBLE_EQ(m.params_x_lnew, 490.0);
  EXPECT_DOUBLE_EQ(m.draft_params_x_width, 56.0);
  EXPECT_EQ(m.draft_forwards, 10u);
}

TEST(Finalize, AllMisses) {
  std::vector<StepTrace> trace;
  for (int i = 1; i <= 5; ++i) trace.push_back(event(TraceEvent::kMissStep, 70.0 * i));
  const RunMetrics m = finalize(trace, ModelSpec{70, 70}, ModelSpec{7, 10}, 350);
  EXPECT_EQ(m.hits, 0u);
  EXPECT_EQ(m.misses, 5u);
  EXPECT_EQ(m.cache_hit_rate, 0.0);
  EXPECT_DOUBLE_EQ(m.mean_acceptance_length, 1.0);
  EXPECT_DOUBLE_EQ(m.speedup_vs_vanilla, 1.0);
  EXPECT_DOUBLE_EQ(m.params_x_lnew, 70.0);
  EXPECT_EQ(m.draft_params_x_width, 0.0);
}

TEST(Finalize, RejectsEmptyAndUnorderedTraces) {
  EXPECT_THROW(finalize({}, ModelSpec{}, ModelSpec{}, 0), InputError);
  const std::vector<StepTrace> bad{event(TraceEvent::kMissStep, 2), event(TraceEvent::kMissStep, 1)};
  EXPECT_THROW(finalize(bad, ModelSpec{}, ModelSpec{}, 0), InputError);
}

TEST(Aggregate, PoolsSumsNotMeans) {
  const std::vector<StepTrace> a{event(TraceEvent::kVerify, 10, 9, 10)};
  const std::vector<StepTrace> b{event(TraceEvent::kMissStep, 10), event(TraceEvent::kMissStep, 20)};
  const ModelSpec spec{1, 10};
  const RunMetrics ma = finalize(a, spec, spec, 100);
  const RunMetrics mb = finalize(b, spec, spec, 20);
  const std::vector<RunMetrics> runs{ma, mb};
  const RunMetrics m = aggregate(runs, spec, spec);
  EXPECT_EQ(m.tokens_emitted, 12u);
  EXPECT_EQ(m.target_forwards, 3u);
  EXPECT_DOUBLE_EQ(m.mean_acceptance_length, 4.0);
  EXPECT_DOUBLE_EQ(m.sim_time, 30.0);
  EXPECT_DOUBLE_EQ(m.speedup_vs_vanilla, 4.0);
  EXPECT_DOUBLE_EQ(m.cache_hit_rate, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.params_x_lnew, 4.0);
}

TEST(MetricValue, CoversEveryField) {
  RunMetrics m;
  m.hits = 3;
  for (const auto& f : metric_field_names()) EXPECT_NO_THROW(metric_value(m, f));
  EXPECT_EQ(metric_value(m, "hits"), 3.0);
  EXPECT_THROW(metric_value(m, "nope"), InputError);
}

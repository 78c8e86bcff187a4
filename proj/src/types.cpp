#include "card/types.hpp"

#include <cmath>
#include <numeric>

#include "card/rng.hpp"

namespace card {

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InputError("probability vector is empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (std::isnan(p) || p < 0.0) {
      throw InputError("probability vector entry " + std::to_string(i) + " is negative or NaN");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InputError("probability vector sums to " + std::to_string(sum) + ", not 1");
  }
}

ProbVector ProbVector::from_weights(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (std::isnan(w) || w < 0.0 || std::isinf(w)) throw InputError("invalid weight");
    total += w;
  }
  if (!(total > 0.0)) throw InputError("weights have no positive mass");
  for (double& w : weights) w /= total;
  return ProbVector(std::move(weights));
}

ProbVector ProbVector::one_hot(std::size_t vocab, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab) {
    throw InputError("one-hot token out of vocabulary");
  }
  std::vector<double> probs(vocab, 0.0);
  probs[static_cast<std::size_t>(token)] = 1.0;
  return ProbVector(std::move(probs));
}

ProbVector ProbVector::uniform(std::size_t vocab) {
  if (vocab == 0) throw InputError("empty vocabulary");
  return ProbVector(std::vector<double>(vocab, 1.0 / static_cast<double>(vocab)));
}

TokenId ProbVector::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs_.size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

void ModelSpec::validate() const {
  if (!(std::isfinite(params_billions) && params_billions > 0.0)) {
    throw ConfigError("params_billions must be positive and finite");
  }
  if (!(std::isfinite(forward_latency) && forward_latency > 0.0)) {
    throw ConfigError("forward_latency must be positive and finite");
  }
}

TokenId Rng::categorical(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw InputError("categorical weights have no positive mass");
  const double target = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    acc += weights[i];
    if (target < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_positive);
}

}  // namespace card

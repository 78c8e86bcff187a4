#include "card/verify.hpp"

#include <algorithm>
#include <cmath>

namespace card {

namespace {

void check_arity(std::span<const ProbVector> target_dists, std::span<const TokenId> candidate) {
  if (target_dists.size() != candidate.size() + 1) {
    throw InputError("verification needs |candidate| + 1 = " + std::to_string(candidate.size() + 1) +
                     " target distributions, got " + std::to_string(target_dists.size()));
  }
  const std::size_t vocab = target_dists.front().size();
  for (const ProbVector& d : target_dists) {
    if (d.size() != vocab) throw InputError("target distributions disagree on vocabulary size");
  }
  for (TokenId t : candidate) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) throw InputError("candidate token outside the vocabulary");
  }
}

}  // namespace

VerifyOutcome verify_greedy(std::span<const ProbVector> target_dists, std::span<const TokenId> candidate) {
  check_arity(target_dists, candidate);
  VerifyOutcome out;
  out.lnew = candidate.size() + 1;
  std::size_t i = 0;
  while (i < candidate.size() && candidate[i] == target_dists[i].argmax()) {
    out.accepted.push_back(candidate[i]);
    ++i;
  }
  out.accepted_len = i;
  out.correction = target_dists[i].argmax();
  return out;
}

std::vector<double> residual_weights(const ProbVector& target, const ProbVector& proposal) {
  if (target.size() != proposal.size()) throw InputError("residual: vocabulary size mismatch");
  std::vector<double> w(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::max(0.0, target.probs()[i] - proposal.probs()[i]);
    total += w[i];
  }
  if (!(total > 0.0)) return {target.probs().begin(), target.probs().end()};
  for (double& x : w) x /= total;
  return w;
}

VerifyOutcome verify_sampling(std::span<const ProbVector> target_dists, std::span<const ProbVector> proposal_dists,
                              std::span<const TokenId> candidate, double temperature, Rng& rng) {
  check_arity(target_dists, candidate);
  if (proposal_dists.size() != candidate.size()) {
    throw InputError("one proposal distribution per candidate token is required");
  }
  if (!(temperature > 0.0)) throw InputError("sampling verification needs a positive temperature");

  VerifyOutcome out;
  out.lnew = candidate.size() + 1;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const ProbVector& p = target_dists[i];
    const ProbVector& q = proposal_dists[i];
    if (q.size() != p.size()) throw InputError("proposal and target vocabulary sizes differ");
    const TokenId x = candidate[i];
    const double qx = q[x];
    if (!(qx > 0.0)) {
      throw ProtocolError("candidate token " + std::to_string(x) + " has zero proposal probability");
    }
    const double accept = std::min(1.0, p[x] / qx);
    if (rng.uniform() < accept) {
      out.accepted.push_back(x);
      continue;
    }
    out.accepted_len = out.accepted.size();
    out.correction = rng.categorical(residual_weights(p, q));
    return out;
  }
  out.accepted_len = out.accepted.size();
  out.correction = rng.categorical(target_dists.back().probs());
  return out;
}

}  // namespace card

#pragma once

// Target-side chain verification.

#include <cstddef>
#include <span>
#include <vector>

#include "card/rng.hpp"
#include "card/types.hpp"

namespace card {

struct VerifyOutcome {
  std::vector<TokenId> accepted;  // prefix of the candidate
  TokenId correction = 0;         // token emitted after the accepted prefix
  std::size_t accepted_len = 0;
  std::size_t lnew = 0;  // tokens processed by the target forward: |candidate| + 1
};

// Longest prefix matching the target argmax (lowest id on ties), followed by
// the argmax at the first mismatch or after the chain. Requires
// |target_dists| == |candidate| + 1.
VerifyOutcome verify_greedy(std::span<const ProbVector> target_dists,
                            std::span<const TokenId> candidate);

// Speculative sampling against proposal distributions q_i, one per candidate
// position: accept candidate[i] with probability min(1, p_i(x) / q_i(x)); on
// rejection draw the correction from normalize(max(p_i - q_i, 0)); after a
// full accept draw it from the final target distribution. The emitted tokens
// are distributed exactly as target sampling whenever candidate[i] is a draw
// from q_i. A deterministic proposal is passed as a one-hot q_i.
//
// Throws ProtocolError when q_i(candidate[i]) == 0 and InputError on arity
// mismatch or non-positive temperature.
VerifyOutcome verify_sampling(std::span<const ProbVector> target_dists,
                              std::span<const ProbVector> proposal_dists,
                              std::span<const TokenId> candidate, double temperature, Rng& rng);

// normalize(max(target - proposal, 0)); falls back to `target` when the
// positive part is numerically zero.
std::vector<double> residual_weights(const ProbVector& target, const ProbVector& proposal);

}  // namespace card

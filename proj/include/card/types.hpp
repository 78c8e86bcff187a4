#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace card {

// Vocabulary index. Valid ids satisfy 0 <= id < vocab_size.
using TokenId = std::int32_t;

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input: arity mismatch, out-of-vocabulary token, empty context.
class InputError : public Error {
 public:
  using Error::Error;
};

// Attention mask whose rows are not ancestor-closed or not topologically ordered.
class MaskError : public Error {
 public:
  using Error::Error;
};

// Violation of the draft/target protocol; indicates an orchestrator bug.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Invalid engine or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(format(file, line, what)), file_(std::move(file)), line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& file, std::size_t line,
                            const std::string& what) {
    if (line == 0) return file + ": " + what;
    return file + ":" + std::to_string(line) + ": " + what;
  }

  std::string file_;
  std::size_t line_;
};

// ----------------------------------------------------------------------------
// ProbVector
// ----------------------------------------------------------------------------

// A normalized distribution over the vocabulary. Construction validates:
// no NaN, no negative entry, sum within 1e-9 of one.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ProbVector() = default;
  explicit ProbVector(std::vector<double> probs);

  // Normalizes non-negative weights (at least one positive).
  static ProbVector from_weights(std::vector<double> weights);
  static ProbVector one_hot(std::size_t vocab, TokenId token);
  static ProbVector uniform(std::size_t vocab);

  std::size_t size() const { return probs_.size(); }
  bool empty() const { return probs_.empty(); }
  double operator[](TokenId token) const { return probs_[static_cast<std::size_t>(token)]; }
  std::span<const double> probs() const { return probs_; }

  // Highest-probability token; ties go to the lowest id.
  TokenId argmax() const;

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> probs_;
};

// ----------------------------------------------------------------------------
// ModelSpec
// ----------------------------------------------------------------------------

// Model metadata consumed by the simulated clock and the cost metrics.
struct ModelSpec {
  double params_billions = 1.0;
  double forward_latency = 1.0;

  void validate() const;
};

}  // namespace card

#pragma once

// Command implementations behind the `card` executable. Each writes an
// aligned table to `out`, diagnostics to `err`, and line-delimited JSON
// records to options.out when set. Return value is the process exit status:
// 0 on success, 1 on bad input files or configuration, 2 on usage errors.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "card/engine.hpp"
#include "card/io.hpp"

namespace card {

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> models;  // overrides the config's "models"
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> trace;
  std::optional<Mode> mode;
  std::optional<std::uint64_t> seed;
  std::string sweep;  // "param=v1,v2,..." (sweep only)
};

struct SweepSpec {
  std::string param;
  std::vector<double> values;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Throws UsageError on an unknown parameter or a malformed value list.
SweepSpec parse_sweep(const std::string& text);

// Applies one swept value. Throws UsageError for unknown parameters and
// ConfigError for out-of-range values.
void apply_sweep_value(EngineConfig& config, const std::string& param, double value);

struct CorpusResult {
  std::vector<RunResult> runs;  // one per prompt, corpus order
  RunMetrics aggregate;
};

// Runs every prompt (in parallel) with seed derive_seed(config.seed, index).
CorpusResult run_corpus(const EngineConfig& config, const std::vector<PromptRecord>& corpus, const ModelPair& models);
CorpusResult run_corpus_vanilla(const EngineConfig& config, const std::vector<PromptRecord>& corpus,
                                const ModelPair& models);

int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_ablate(const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace card

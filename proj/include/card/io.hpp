#pragma once

// File formats: engine config (JSON), model pair (JSON), prompt corpus
// (JSONL), and line-delimited metric/trace records.
//
// Config keys: K, k, ratio, temperature, max_new_tokens, mode,
// correction_enabled, seed, query_depth, max_depth, models (path to the
// model file, relative to the config). Unknown keys are rejected.
//
// Model file:
//   {"target": {"kind": "kgram", "seed": 7, "vocab": 16, "order": 3,
//               "sharpness": 2.5, "decay": 0.5, "params_billions": 70,
//               "forward_latency": 70},
//    "draft":  {"kind": "scripted", "table": "draft.txt", ...}}
// kinds: kgram, scripted (table path relative to the model file), uniform,
// copy ("of": "target" or "draft"; same distributions, own latency/params).
// Every kind accepts an optional "eos" token.
//
// Corpus lines: {"id": "p0", "tokens": [1, 2, 3]} or {"id": "p1", "text": "hi"}
// (text maps to its bytes, vocabulary 256). Blank lines and lines starting
// with '#' are skipped.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "card/engine.hpp"
#include "card/lm.hpp"
#include "card/metrics.hpp"

namespace card {

struct PromptRecord {
  std::string id;
  std::vector<TokenId> tokens;
};

struct RunConfig {
  EngineConfig engine;
  std::optional<std::filesystem::path> models;  // resolved against the config's directory
};

struct ModelPair {
  ModelPtr draft;
  ModelPtr target;
};

// All loaders throw ParseError (with a line number where one applies) on
// malformed input and ConfigError on well-formed but invalid values.
RunConfig parse_run_config(const std::string& text, const std::string& name,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

ModelPair parse_models(const std::string& text, const std::string& name, const std::filesystem::path& base_dir = {});
ModelPair load_models(const std::filesystem::path& path);

std::vector<PromptRecord> parse_corpus(std::istream& in, const std::string& name);
std::vector<PromptRecord> load_corpus(const std::filesystem::path& path);

// Metric fields in metric_field_names() order.
nlohmann::ordered_json metrics_to_json(const RunMetrics& m);
nlohmann::ordered_json trace_to_json(const StepTrace& t);

std::string read_file(const std::filesystem::path& path);

}  // namespace card

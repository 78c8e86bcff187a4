#include "card/io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace card {

using nlohmann::json;

namespace {

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json parse_json(const std::string& text, const std::string& name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the byte just past the offending token.
    throw ParseError(name, line_of(text, e.byte == 0 ? 0 : e.byte - 1), "invalid JSON");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& what) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.contains(key)) throw ConfigError(what + ": unknown key '" + key + "'");
  }
}

std::size_t positive(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
    throw ConfigError(std::string("'") + key + "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

double number(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& rel) {
  const std::filesystem::path p(rel);
  return p.is_absolute() || base.empty() ? p : base / p;
}

ModelSpec spec_of(const json& m) {
  ModelSpec spec;
  if (m.contains("params_billions")) spec.params_billions = number(m, "params_billions");
  if (m.contains("forward_latency")) spec.forward_latency = number(m, "forward_latency");
  try {
    spec.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

std::optional<TokenId> eos_of(const json& m) {
  if (!m.contains("eos") || m.at("eos").is_null()) return std::nullopt;
  if (!m.at("eos").is_number_integer()) throw ConfigError("'eos' must be an integer token id");
  return m.at("eos").get<TokenId>();
}

ModelPtr build_model(const json& m, const std::string& role, const std::filesystem::path& base_dir,
                     const ModelPtr& other) {
  if (!m.is_object()) throw ConfigError(role + ": model entry must be an object");
  const std::string kind = m.value("kind", "");
  const ModelSpec spec = spec_of(m);
  const auto eos = eos_of(m);
  if (kind == "kgram") {
    reject_unknown(m, {"kind", "seed", "vocab", "order", "sharpness", "decay", "eos", "params_billions", "forward_latency"},
                   role);
    KGramParams p;
    p.seed = m.value("seed", std::uint64_t{0});
    p.vocab = positive(m, "vocab");
    p.order = positive(m, "order");
    p.sharpness = m.contains("sharpness") ? number(m, "sharpness") : 1.0;
    p.decay = m.contains("decay") ? number(m, "decay") : 1.0;
    p.eos = eos;
    return make_kgram_model(p, spec);
  }
  if (kind == "scripted") {
    reject_unknown(m, {"kind", "table", "eos", "params_billions", "forward_latency"}, role);
    if (!m.contains("table") || !m.at("table").is_string()) throw ConfigError(role + ": scripted model needs 'table'");
    const auto path = resolve_path(base_dir, m.at("table").get<std::string>());
    std::ifstream in(path);
    if (!in) throw ConfigError(role + ": cannot open scripted table " + path.string());
    return parse_scripted_model(in, path.string(), spec, eos);
  }
  if (kind == "uniform") {
    reject_unknown(m, {"kind", "vocab", "params_billions", "forward_latency"}, role);
    return make_uniform_model(positive(m, "vocab"), spec);
  }
  if (kind == "copy") {
    reject_unknown(m, {"kind", "of", "params_billions", "forward_latency"}, role);
    if (!other) throw ConfigError(role + ": 'copy' must refer to a model defined without 'copy'");
    return with_spec(other, spec);
  }
  throw ConfigError(role + ": unknown model kind '" + kind + "'");
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig parse_run_config(const std::string& text, const std::string& name, const std::filesystem::path& base_dir) {
  const json j = parse_json(text, name);
  if (!j.is_object()) throw ParseError(name, 1, "config must be a JSON object");
  reject_unknown(j,
                 {"K", "k", "ratio", "temperature", "max_new_tokens", "mode", "correction_enabled", "seed",
                  "query_depth", "max_depth", "models"},
                 name);
  RunConfig rc;
  EngineConfig& c = rc.engine;
  try {
    if (j.contains("K")) c.width = positive(j, "K");
    if (j.contains("k")) c.branching = positive(j, "k");
    if (j.contains("ratio")) c.ratio = positive(j, "ratio");
    if (j.contains("temperature")) c.temperature = number(j, "temperature");
    if (j.contains("max_new_tokens")) c.max_new_tokens = positive(j, "max_new_tokens");
    if (j.contains("query_depth")) c.query_depth = positive(j, "query_depth");
    if (j.contains("max_depth")) c.max_depth = positive(j, "max_depth");
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("correction_enabled")) {
      if (!j.at("correction_enabled").is_boolean()) throw ConfigError("'correction_enabled' must be a boolean");
      c.correction_enabled = j.at("correction_enabled").get<bool>();
    }
    if (j.contains("mode")) {
      const auto mode = j.at("mode").is_string() ? parse_mode(j.at("mode").get<std::string>()) : std::nullopt;
      if (!mode) throw ConfigError("'mode' must be serial_sim or concurrent");
      c.mode = *mode;
    }
    if (j.contains("models")) {
      if (!j.at("models").is_string()) throw ConfigError("'models' must be a path");
      rc.models = resolve_path(base_dir, j.at("models").get<std::string>());
    }
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  }
  if (c.temperature < 0.0) throw ConfigError(name + ": 'temperature' must be >= 0");
  if (c.query_depth && c.max_depth && *c.query_depth > *c.max_depth) {
    throw ConfigError(name + ": query_depth must not exceed max_depth");
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path), path.string(), path.parent_path());
}

ModelPair parse_models(const std::string& text, const std::string& name, const std::filesystem::path& base_dir) {
  const json j = parse_json(text, name);
  if (!j.is_object()) throw ParseError(name, 1, "model file must be a JSON object");
  reject_unknown(j, {"draft", "target"}, name);
  if (!j.contains("draft") || !j.contains("target")) throw ConfigError(name + ": needs 'draft' and 'target'");

  const json& jd = j.at("draft");
  const json& jt = j.at("target");
  const bool draft_copies = jd.is_object() && jd.value("kind", "") == "copy";
  const bool target_copies = jt.is_object() && jt.value("kind", "") == "copy";
  if (draft_copies && target_copies) throw ConfigError(name + ": draft and target cannot both be copies");
  try {
    ModelPair pair;
    if (draft_copies) {
      pair.target = build_model(jt, "target", base_dir, nullptr);
      pair.draft = build_model(jd, "draft", base_dir, pair.target);
    } else {
      pair.draft = build_model(jd, "draft", base_dir, nullptr);
      pair.target = build_model(jt, "target", base_dir, pair.draft);
    }
    return pair;
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

ModelPair load_models(const std::filesystem::path& path) {
  return parse_models(read_file(path), path.string(), path.parent_path());
}

std::vector<PromptRecord> parse_corpus(std::istream& in, const std::string& name) {
  std::vector<PromptRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw ParseError(name, lineno, "invalid JSON record");
    }
    if (!j.is_object() || !j.contains("id") || !j.at("id").is_string()) {
      throw ParseError(name, lineno, "record needs a string 'id'");
    }
    PromptRecord rec;
    rec.id = j.at("id").get<std::string>();
    if (!ids.insert(rec.id).second) throw ParseError(name, lineno, "duplicate id '" + rec.id + "'");
    const bool has_tokens = j.contains("tokens");
    const bool has_text = j.contains("text");
    if (has_tokens == has_text) throw ParseError(name, lineno, "record needs exactly one of 'tokens' or 'text'");
    if (has_tokens) {
      const json& toks = j.at("tokens");
      if (!toks.is_array()) throw ParseError(name, lineno, "'tokens' must be an array");
      for (const json& t : toks) {
        if (!t.is_number_integer() || t.get<std::int64_t>() < 0 || t.get<std::int64_t>() > INT32_MAX) {
          throw ParseError(name, lineno, "'tokens' must hold non-negative integers");
        }
        rec.tokens.push_back(t.get<TokenId>());
      }
    } else {
      if (!j.at("text").is_string()) throw ParseError(name, lineno, "'text' must be a string");
      for (unsigned char ch : j.at("text").get<std::string>()) rec.tokens.push_back(static_cast<TokenId>(ch));
    }
    if (rec.tokens.empty()) throw ParseError(name, lineno, "prompt is empty");
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw ParseError(name, 0, "corpus has no prompts");
  return out;
}

std::vector<PromptRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_corpus(in, path.string());
}

nlohmann::ordered_json metrics_to_json(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["tokens_emitted"] = m.tokens_emitted;
  j["sim_time"] = m.sim_time;
  j["target_forwards"] = m.target_forwards;
  j["draft_forwards"] = m.draft_forwards;
  j["hits"] = m.hits;
  j["misses"] = m.misses;
  j["mean_acceptance_length"] = m.mean_acceptance_length;
  j["cache_hit_rate"] = m.cache_hit_rate;
  j["tokens_per_time"] = m.tokens_per_time;
  j["speedup_vs_vanilla"] = m.speedup_vs_vanilla;
  j["params_x_lnew"] = m.params_x_lnew;
  j["draft_params_x_width"] = m.draft_params_x_width;
  return j;
}

nlohmann::ordered_json trace_to_json(const StepTrace& t) {
  nlohmann::ordered_json j;
  j["step_index"] = t.step_index;
  j["sim_time"] = t.sim_time;
  j["event"] = std::string(to_string(t.event));
  j["hit"] = t.hit;
  j["candidate_len"] = t.candidate_len;
  j["accepted_len"] = t.accepted_len;
  j["lnew"] = t.lnew;
  j["cache_alive_nodes"] = t.cache_alive_nodes;
  j["width"] = t.width;
  j["cache_depth"] = t.cache_depth;
  j["target_idle"] = t.target_idle;
  return j;
}

}  // namespace card

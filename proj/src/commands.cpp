#include "card/commands.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "card/parallel.hpp"
#include "card/rng.hpp"

namespace card {

using ojson = nlohmann::ordered_json;

SweepSpec parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--sweep expects param=v1,v2,...");
  SweepSpec spec;
  spec.param = text.substr(0, eq);
  EngineConfig probe;
  apply_sweep_value(probe, spec.param, 1.0);  // rejects unknown names
  std::stringstream list(text.substr(eq + 1));
  std::string item;
  while (std::getline(list, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("--sweep: bad value '" + item + "'");
    spec.values.push_back(v);
  }
  if (spec.values.empty()) throw UsageError("--sweep: empty value list");
  return spec;
}

void apply_sweep_value(EngineConfig& config, const std::string& param, double value) {
  auto integer = [&]() {
    if (!(value >= 1.0) || value != std::floor(value)) {
      throw ConfigError("sweep value for " + param + " must be a positive integer");
    }
    return static_cast<std::size_t>(value);
  };
  if (param == "K") {
    config.width = integer();
  } else if (param == "k") {
    config.branching = integer();
  } else if (param == "ratio") {
    config.ratio = integer();
  } else if (param == "query_depth") {
    config.query_depth = integer();
  } else if (param == "temperature") {
    if (!(value >= 0.0)) throw ConfigError("sweep temperature must be >= 0");
    config.temperature = value;
  } else {
    throw UsageError("unknown sweep parameter '" + param + "' (expected K, k, ratio, temperature, query_depth)");
  }
}

namespace {

template <typename RunOne>
CorpusResult run_each(const std::vector<PromptRecord>& corpus, const ModelPair& models, RunOne run_one,
                      const ModelSpec& draft_spec) {
  CorpusResult result;
  result.runs.resize(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { result.runs[i] = run_one(i); });
  std::vector<RunMetrics> all;
  all.reserve(result.runs.size());
  for (const RunResult& r : result.runs) all.push_back(r.metrics);
  result.aggregate = aggregate(all, models.target->spec(), draft_spec);
  return result;
}

}  // namespace

CorpusResult run_corpus(const EngineConfig& config, const std::vector<PromptRecord>& corpus,
                        const ModelPair& models) {
  return run_each(
      corpus, models,
      [&](std::size_t i) {
        EngineConfig c = config;
        c.seed = derive_seed(config.seed, i);
        return run_card(c, corpus[i].tokens, models.draft, models.target);
      },
      models.draft->spec());
}

CorpusResult run_corpus_vanilla(const EngineConfig& config, const std::vector<PromptRecord>& corpus,
                                const ModelPair& models) {
  if (!std::isfinite(config.temperature) || config.temperature < 0.0) throw ConfigError("temperature must be >= 0");
  return run_each(
      corpus, models,
      [&](std::size_t i) {
        return run_vanilla(corpus[i].tokens, models.target, config.max_new_tokens, config.temperature,
                           derive_seed(config.seed, i));
      },
      models.target->spec());
}

namespace {

struct Loaded {
  EngineConfig engine;
  std::vector<PromptRecord> corpus;
  ModelPair models;
};

Loaded load_inputs(const CommandOptions& o) {
  Loaded in;
  RunConfig rc = load_run_config(o.config);
  in.engine = rc.engine;
  if (o.mode) in.engine.mode = *o.mode;
  if (o.seed) in.engine.seed = *o.seed;
  const auto models_path = o.models ? o.models : rc.models;
  if (!models_path) throw ConfigError("no model file: pass --models or set \"models\" in the config");
  in.models = load_models(*models_path);
  in.corpus = load_corpus(o.corpus);
  return in;
}

int guarded(std::ostream& err, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

class RecordSink {
 public:
  explicit RecordSink(const std::optional<std::filesystem::path>& path) {
    if (!path) return;
    file_.open(*path, std::ios::binary | std::ios::trunc);
    if (!file_) throw ConfigError("cannot write " + path->string());
  }
  void write(const ojson& record) {
    if (file_.is_open()) file_ << record.dump() << '\n';
  }
  void close() {
    if (!file_.is_open()) return;
    file_.close();
    if (!file_) throw ConfigError("write failed");
  }

 private:
  std::ofstream file_;
};

ojson row_record(const std::string& kind, const std::string& id, const RunMetrics& m) {
  ojson j;
  j["row"] = kind;
  j["id"] = id;
  j.update(metrics_to_json(m));
  return j;
}

std::string table_header(const std::string& first) {
  return fmt::format("{:<20} {:>8} {:>10} {:>8} {:>8} {:>9} {:>10} {:>8}\n", first, "tokens", "sim_time", "fwd",
                     "mean_acc", "hit_rate", "tok/time", "speedup");
}

std::string table_row(const std::string& first, const RunMetrics& m) {
  return fmt::format("{:<20} {:>8} {:>10.1f} {:>8} {:>8.3f} {:>9.3f} {:>10.5f} {:>8.3f}\n", first, m.tokens_emitted,
                     m.sim_time, m.target_forwards, m.mean_acceptance_length, m.cache_hit_rate, m.tokens_per_time,
                     m.speedup_vs_vanilla);
}

void write_traces(const std::optional<std::filesystem::path>& path, const std::vector<PromptRecord>& corpus,
                  const CorpusResult& result, const std::string& label = {}) {
  if (!path) return;
  RecordSink sink(path);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const StepTrace& t : result.runs[i].trace) {
      ojson j;
      if (!label.empty()) j["run"] = label;
      j["id"] = corpus[i].id;
      j.update(trace_to_json(t));
      sink.write(j);
    }
  }
  sink.close();
}

std::string format_value(double v) {
  return v == std::floor(v) && std::abs(v) < 1e15 ? fmt::format("{}", static_cast<long long>(v))
                                                     : fmt::format("{}", v);
}

}  // namespace

int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Loaded in = load_inputs(options);
    const CorpusResult result = run_corpus(in.engine, in.corpus, in.models);

    RecordSink sink(options.out);
    std::string table = table_header("id");
    for (std::size_t i = 0; i < in.corpus.size(); ++i) {
      ojson rec = row_record("prompt", in.corpus[i].id, result.runs[i].metrics);
      rec["output"] = result.runs[i].tokens;
      sink.write(rec);
      table += table_row(in.corpus[i].id, result.runs[i].metrics);
    }
    sink.write(row_record("aggregate", "*", result.aggregate));
    table += table_row("aggregate", result.aggregate);
    sink.close();
    write_traces(options.trace, in.corpus, result);
    out << table;
  });
}

int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SweepSpec spec = parse_sweep(options.sweep);
    const Loaded in = load_inputs(options);

    RecordSink sink(options.out);
    std::string table = table_header(spec.param);
    for (double value : spec.values) {
      EngineConfig c = in.engine;
      apply_sweep_value(c, spec.param, value);
      const CorpusResult result = run_corpus(c, in.corpus, in.models);
      for (const std::string& field : metric_field_names()) {
        ojson rec;
        rec["param"] = spec.param;
        rec["value"] = value;
        rec["metric"] = field;
        rec["result"] = metric_value(result.aggregate, field);
        sink.write(rec);
      }
      table += table_row(format_value(value), result.aggregate);
    }
    sink.close();
    out << table;
  });
}

int cmd_ablate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Loaded in = load_inputs(options);

    EngineConfig cache_only = in.engine;
    cache_only.correction_enabled = false;
    EngineConfig with_correct = in.engine;
    with_correct.correction_enabled = true;

    const std::vector<std::pair<std::string, CorpusResult>> rows = {
        {"vanilla", run_corpus_vanilla(in.engine, in.corpus, in.models)},
        {"cache_only", run_corpus(cache_only, in.corpus, in.models)},
        {"cache_plus_correct", run_corpus(with_correct, in.corpus, in.models)},
    };

    RecordSink sink(options.out);
    std::string table = table_header("variant");
    for (const auto& [name, result] : rows) {
      sink.write(row_record(name, "*", result.aggregate));
      table += table_row(name, result.aggregate);
    }
    sink.close();
    if (options.trace) {
      // One file holding all three variants, tagged by "run".
      RecordSink trace_sink(options.trace);
      for (const auto& [name, result] : rows) {
        for (std::size_t i = 0; i < in.corpus.size(); ++i) {
          for (const StepTrace& t : result.runs[i].trace) {
            ojson j;
            j["run"] = name;
            j["id"] = in.corpus[i].id;
            j.update(trace_to_json(t));
            trace_sink.write(j);
          }
        }
      }
      trace_sink.close();
    }
    out << table;
  });
}

}  // namespace card

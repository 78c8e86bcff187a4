#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "card/lm.hpp"
#include "card/rng.hpp"

namespace card {

namespace {

class UniformModel final : public Model {
 public:
  UniformModel(std::size_t vocab, ModelSpec spec) : Model(vocab, spec), dist_(ProbVector::uniform(vocab)) {}

 protected:
  ProbVector compute(std::span<const TokenId>) const override { return dist_; }

 private:
  ProbVector dist_;
};

ProbVector softmax(std::vector<double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  for (double& x : logits) x = std::exp(x - top);
  return ProbVector::from_weights(std::move(logits));
}

class KGramModel final : public Model {
 public:
  KGramModel(const KGramParams& p, ModelSpec spec) : Model(p.vocab, spec, p.eos), params_(p) {
    if (params_.order < 1) throw ConfigError("k-gram order must be at least 1");
    if (!(params_.sharpness > 0.0) || !std::isfinite(params_.sharpness)) {
      throw ConfigError("k-gram sharpness must be positive and finite");
    }
    if (!(params_.decay > 0.0) || !std::isfinite(params_.decay)) {
      throw ConfigError("k-gram decay must be positive and finite");
    }
  }

 protected:
  ProbVector compute(std::span<const TokenId> context) const override {
    std::vector<double> logits(vocab_size(), 0.0);
    double weight = 1.0;
    for (std::size_t level = 1; level <= params_.order; ++level, weight *= params_.decay) {
      std::uint64_t key = mix64(params_.seed ^ mix64(level));
      for (std::size_t back = level; back > 0; --back) {
        // Positions before the start of the context hash as -1.
        const TokenId t = back <= context.size() ? context[context.size() - back] : TokenId{-1};
        key = mix64(key ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(t) + 0x10001));
      }
      for (std::size_t v = 0; v < vocab_size(); ++v) logits[v] += weight * gaussian(key, v);
    }
    for (double& x : logits) x *= params_.sharpness;
    return softmax(std::move(logits));
  }

 private:
  // Box-Muller on two hashed uniforms.
  static double gaussian(std::uint64_t key, std::size_t v) {
    const std::uint64_t a = mix64(key ^ (2 * v + 1));
    const std::uint64_t b = mix64(a ^ 0xd1b54a32d192ed03ULL);
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  KGramParams params_;
};

class TemperedModel final : public Model {
 public:
  TemperedModel(ModelPtr base, double temperature)
      : Model(base->vocab_size(), base->spec(), base->eos()), base_(std::move(base)), inv_t_(1.0 / temperature) {}

 protected:
  ProbVector compute(std::span<const TokenId> context) const override {
    const ProbVector p = base_->next_distribution(context);
    const double top = p[p.argmax()];
    std::vector<double> w(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pi = p.probs()[i];
      if (pi > 0.0) w[i] = std::exp((std::log(pi) - std::log(top)) * inv_t_);
    }
    return ProbVector::from_weights(std::move(w));
  }

 private:
  ModelPtr base_;
  double inv_t_;
};

class RespecModel final : public Model {
 public:
  RespecModel(ModelPtr base, ModelSpec spec)
      : Model(base->vocab_size(), spec, base->eos()), base_(std::move(base)) {}

 protected:
  ProbVector compute(std::span<const TokenId> context) const override { return base_->next_distribution(context); }

 private:
  ModelPtr base_;
};

}  // namespace

ModelPtr make_uniform_model(std::size_t vocab, ModelSpec spec) {
  return std::make_shared<UniformModel>(vocab, spec);
}

ModelPtr make_kgram_model(const KGramParams& params, ModelSpec spec) {
  return std::make_shared<KGramModel>(params, spec);
}

ModelPtr with_temperature(ModelPtr base, double temperature) {
  if (!base) throw InputError("with_temperature: null model");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InputError("with_temperature: temperature must be positive");
  }
  if (temperature == 1.0) return base;
  return std::make_shared<TemperedModel>(std::move(base), temperature);
}

ModelPtr with_spec(ModelPtr base, ModelSpec spec) {
  if (!base) throw InputError("with_spec: null model");
  return std::make_shared<RespecModel>(std::move(base), spec);
}

// ----------------------------------------------------------------------------
// ScriptedModel
// ----------------------------------------------------------------------------

ScriptedModel::ScriptedModel(std::map<std::vector<TokenId>, ProbVector> table, ProbVector fallback,
                             ModelSpec spec, std::optional<TokenId> eos)
    : Model(fallback.size(), spec, eos), table_(std::move(table)), fallback_(std::move(fallback)) {
  for (const auto& [key, dist] : table_) {
    if (key.empty()) throw ConfigError("scripted model: empty context key");
    for (TokenId t : key) {
      if (!in_vocab(t)) throw ConfigError("scripted model: key token outside vocabulary");
    }
    if (dist.size() != vocab_size()) throw ConfigError("scripted model: distribution size mismatch");
    longest_key_ = std::max(longest_key_, key.size());
  }
}

ProbVector ScriptedModel::compute(std::span<const TokenId> context) const {
  for (std::size_t len = std::min(longest_key_, context.size()); len > 0; --len) {
    const std::vector<TokenId> suffix(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
    if (auto it = table_.find(suffix); it != table_.end()) return it->second;
  }
  return fallback_;
}

std::shared_ptr<const ScriptedModel> parse_scripted_model(std::istream& in, const std::string& name,
                                                          ModelSpec spec, std::optional<TokenId> eos) {
  std::map<std::vector<TokenId>, ProbVector> table;
  std::optional<ProbVector> fallback;
  std::size_t vocab = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto arrow = line.find("->");
    if (arrow == std::string::npos) throw ParseError(name, line_no, "expected '->'");

    std::istringstream lhs(line.substr(0, arrow));
    std::istringstream rhs(line.substr(arrow + 2));
    std::vector<TokenId> key;
    bool is_default = false;
    std::string word;
    while (lhs >> word) {
      if (word == "*") {
        is_default = true;
        continue;
      }
      try {
        std::size_t used = 0;
        const long v = std::stol(word, &used);
        if (used != word.size() || v < 0) throw std::invalid_argument(word);
        key.push_back(static_cast<TokenId>(v));
      } catch (const std::exception&) {
        throw ParseError(name, line_no, "bad token '" + word + "'");
      }
    }
    if (is_default == !key.empty()) {
      throw ParseError(name, line_no, "left side must be token ids or a single '*'");
    }
    std::vector<double> probs;
    while (rhs >> word) {
      try {
        std::size_t used = 0;
        probs.push_back(std::stod(word, &used));
        if (used != word.size()) throw std::invalid_argument(word);
      } catch (const std::exception&) {
        throw ParseError(name, line_no, "bad probability '" + word + "'");
      }
    }
    if (vocab == 0) vocab = probs.size();
    if (probs.size() != vocab || vocab < 2) {
      throw ParseError(name, line_no, "distribution must have " + std::to_string(std::max<std::size_t>(vocab, 2)) +
                                          " entries");
    }
    for (TokenId t : key) {
      if (static_cast<std::size_t>(t) >= vocab) throw ParseError(name, line_no, "token outside vocabulary");
    }
    try {
      ProbVector dist(std::move(probs));
      if (is_default) {
        if (fallback) throw ParseError(name, line_no, "duplicate '*' entry");
        fallback = std::move(dist);
      } else if (!table.emplace(key, std::move(dist)).second) {
        throw ParseError(name, line_no, "duplicate context");
      }
    } catch (const InputError& e) {
      throw ParseError(name, line_no, e.what());
    }
  }
  if (vocab == 0) throw ParseError(name, 0, "no entries");
  try {
    return std::make_shared<ScriptedModel>(std::move(table), fallback ? *fallback : ProbVector::uniform(vocab),
                                           spec, eos);
  } catch (const ConfigError& e) {
    throw ParseError(name, 0, e.what());
  }
}

}  // namespace card

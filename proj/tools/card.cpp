#include <iostream>

#include <CLI11.hpp>

#include "card/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Query-and-correct speculative decoding simulator"};
  app.require_subcommand(1);

  card::CommandOptions opts;
  std::string config, corpus, models, out, trace, mode;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "engine config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--corpus", corpus, "prompt corpus (JSONL)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--models", models, "draft/target model file (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "write line-delimited records here");
    cmd->add_option("--trace", trace, "write per-step trace records here");
    cmd->add_option("--mode", mode, "serial_sim or concurrent")
        ->check(CLI::IsMember({"serial_sim", "concurrent"}));
    cmd->add_option("--seed", seed, "override the config seed");
  };

  auto* run = app.add_subcommand("run", "decode every prompt and report metrics");
  auto* sweep = app.add_subcommand("sweep", "repeat the run over a parameter list");
  auto* ablate = app.add_subcommand("ablate", "vanilla vs cache_only vs cache_plus_correct");
  add_common(run);
  add_common(sweep);
  add_common(ablate);
  sweep->add_option("--sweep", opts.sweep, "param=v1,v2,... (K, k, ratio, temperature, query_depth)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version come through here with a zero code.
    return app.exit(e) == 0 ? card::kExitOk : card::kExitUsage;
  }

  opts.config = config;
  opts.corpus = corpus;
  if (!models.empty()) opts.models = models;
  if (!out.empty()) opts.out = out;
  if (!trace.empty()) opts.trace = trace;
  if (!mode.empty()) opts.mode = card::parse_mode(mode);
  if (app.got_subcommand(run) ? run->count("--seed") : app.got_subcommand(sweep) ? sweep->count("--seed")
                                                                                 : ablate->count("--seed")) {
    opts.seed = seed;
  }

  if (app.got_subcommand(run)) return card::cmd_run(opts, std::cout, std::cerr);
  if (app.got_subcommand(sweep)) return card::cmd_sweep(opts, std::cout, std::cerr);
  return card::cmd_ablate(opts, std::cout, std::cerr);
}

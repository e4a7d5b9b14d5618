// SPDX-License-Identifier: Apache-2.0
//
// lslab: desk-scale laboratory for language-specific low-rank adapter
// fine-tuning on synthetic multilingual translation.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lslab/errors.hpp"
#include "lslab/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(const lslab::Error& e) {
  if (e.category() == "missing") return kExitMissing;
  if (e.category() == "numeric") return kExitNumeric;
  return kExitConfig;
}

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir;
  bool force = false;
  int beam = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_beam = false) {
  cmd->add_option("--config", args.config_path, "experiment config file (JSON)")->required();
  cmd->add_option("--seed", args.seed, "root random seed");
  cmd->add_option("--out", args.out_dir, "output directory (default: config output_dir)");
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
  if (with_beam) cmd->add_option("--beam", args.beam, "beam width for decoding (1 = greedy)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-specific low-rank adapter laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string phase = "lslo_finetune";
  std::string mode = "layerwise";
  std::string ckpt;
  std::string label = "checkpoint";
  std::vector<std::string> eval_files;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic parallel corpus");
  add_common(gen, args);

  CLI::App* seed_cmd = app.add_subcommand("seed-pretrain", "train the base model from scratch");
  add_common(seed_cmd, args);

  CLI::App* wl = app.add_subcommand("weight-learn",
                                    "learn per-layer source/target mixing weights and emit the "
                                    "index strategy");
  add_common(wl, args);

  CLI::App* tr = app.add_subcommand("train", "run a fine-tuning phase from the seed checkpoint");
  add_common(tr, args, true);
  tr->add_option("--phase", phase, "ft_all or lslo_finetune")->required();

  CLI::App* est = app.add_subcommand("estimate", "grouped-pruning subspace estimation");
  add_common(est, args);
  est->add_option("--mode", mode, "layerwise or langspec");

  CLI::App* ev = app.add_subcommand("evaluate", "score a checkpoint on the held-out set");
  add_common(ev, args, true);
  ev->add_option("--ckpt", ckpt, "checkpoint to evaluate")->required();
  ev->add_option("--label", label, "method label for the report row");

  CLI::App* rep = app.add_subcommand("report", "merge eval JSON files into one report table");
  add_common(rep, args);
  rep->add_option("files", eval_files, "eval.json files to merge");

  CLI11_PARSE(app, argc, argv);

  try {
    lslab::ExperimentConfig cfg = lslab::ExperimentConfig::load(args.config_path);
    std::string out = args.out_dir.empty() ? cfg.output_dir : args.out_dir;

    std::vector<std::string> written;
    if (gen->parsed()) {
      written = lslab::run_gen_data(cfg, args.seed, out, args.force);
    } else if (seed_cmd->parsed()) {
      written = lslab::run_seed_pretrain(cfg, args.seed, out, args.force);
    } else if (wl->parsed()) {
      written = lslab::run_weight_learn(cfg, args.seed, out, args.force);
    } else if (tr->parsed()) {
      written = lslab::run_train_phase(cfg, lslab::phase_from_string(phase), args.seed, out,
                                       args.force, args.beam);
    } else if (est->parsed()) {
      lslab::Grouping g = mode == "langspec" ? lslab::Grouping::LanguageSpecificGlobal
                                             : lslab::Grouping::LayerwiseCrossLanguage;
      if (mode != "langspec" && mode != "layerwise")
        throw lslab::ConfigError("estimate: unknown mode \"" + mode + "\"");
      written = lslab::run_estimate_cmd(cfg, g, args.seed, out, args.force);
    } else if (ev->parsed()) {
      written = lslab::run_evaluate(cfg, ckpt, label, args.seed, out, args.force, args.beam);
    } else if (rep->parsed()) {
      written = lslab::run_report(eval_files, out, args.force);
    }
    for (const std::string& path : written) std::cout << path << "\n";
    return kExitOk;
  } catch (const lslab::Error& e) {
    std::cerr << "lslab: error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "lslab: error: internal: " << e.what() << "\n";
    return kExitConfig;
  }
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lslab/config.hpp"

namespace lslab {

// Subcommand bodies. Each is deterministic under (config, seed), creates its
// output directory, and refuses to clobber existing primary outputs unless
// force is set. Paths of written files are returned for logging.

std::vector<std::string> run_gen_data(const ExperimentConfig& cfg, std::uint64_t seed,
                                      const std::string& out_dir, bool force);

std::vector<std::string> run_seed_pretrain(const ExperimentConfig& cfg, std::uint64_t seed,
                                           const std::string& out_dir, bool force);

std::vector<std::string> run_weight_learn(const ExperimentConfig& cfg, std::uint64_t seed,
                                          const std::string& out_dir, bool force);

// phase is ft_all or lslo_finetune.
std::vector<std::string> run_train_phase(const ExperimentConfig& cfg, Phase phase,
                                         std::uint64_t seed, const std::string& out_dir,
                                         bool force, int beam);

// mode is layerwise or langspec.
std::vector<std::string> run_estimate_cmd(const ExperimentConfig& cfg, Grouping mode,
                                          std::uint64_t seed, const std::string& out_dir,
                                          bool force);

std::vector<std::string> run_evaluate(const ExperimentConfig& cfg, const std::string& ckpt_path,
                                      const std::string& label, std::uint64_t seed,
                                      const std::string& out_dir, bool force, int beam);

// Merges per-run eval JSON files into one combined report CSV.
std::vector<std::string> run_report(const std::vector<std::string>& eval_jsons,
                                    const std::string& out_dir, bool force);

// Method label in the row-label style, e.g. "2;2;8+WL+GPS(0.9)".
std::string method_label(const RankPolicy& policy, const std::string& strategy_suffix,
                         const std::optional<PruneSchedule>& gps);

}  // namespace lslab

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "lslab/data.hpp"
#include "lslab/estimation.hpp"
#include "lslab/trainer.hpp"

namespace lslab {

// One training phase's settings as declared in the experiment document.
struct PhaseConfig {
  int epochs = 15;
  double learning_rate = 3e-3;
  int batch_size = 16;
  SamplingMode sampling = SamplingMode::Uniform;
  long direction_quota = 0;  // per-direction pairs in uniform mode
  int eval_interval = 0;
  std::vector<std::string> eval_buckets;
  int eval_pairs = 16;  // per direction, snapshots and final evaluation
  int val_pairs = 8;    // per direction, validation loss

  // lslo_finetune only
  std::string rank_policy = "2;2;8";
  Placement placement = Placement::All;
  std::string strategy = "target";  // "target", "source", or a strategy file
  std::optional<PruneSchedule> gps;
  std::set<ResourceType> gps_scope = {ResourceType::High, ResourceType::Medium};
  Grouping gps_grouping = Grouping::PerMatrix;

  // weight_learn / estimate only
  int rank = 8;
  double estimate_ratio = 0.7;
  int estimate_start_epoch = 2;
  int estimate_ramp_epochs = 8;
};

struct ExperimentConfig {
  int format_version = 1;
  std::string output_dir = "out";
  CorpusSpec corpus;
  ModelConfig model;  // vocab_size filled from the generated corpus
  PhaseConfig seed_pretrain;
  PhaseConfig ft_all;
  PhaseConfig weight_learn;
  PhaseConfig lslo_finetune;
  PhaseConfig estimate;

  // Hash of the canonical config document; stamped into every output.
  std::string hash;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::string& path);
};

// Strict parse helper: rejects unknown keys so typos fail loudly.
void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                         const std::string& where);

}  // namespace lslab

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lslab/data.hpp"
#include "lslab/metrics.hpp"
#include "lslab/pruning.hpp"

namespace lslab {

enum class Phase {
  SeedPretrain,
  FtAll,
  WeightLearn,
  LsloFinetune,
  EstimateLayerwise,
  EstimateLangspec,
};

const char* to_string(Phase p);
Phase phase_from_string(const std::string& s);
bool phase_freezes_base(Phase p);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9);

  void add_param(const std::string& name, const Tensor& t);
  long registered_elements() const;
  std::size_t num_params() const { return params_.size(); }

  void zero_grad();
  void step(double lr);
  long steps_taken() const { return steps_; }

 private:
  struct Slot {
    std::string name;
    Tensor t;
    std::vector<double> m, v;
  };
  std::vector<Slot> params_;
  double beta1_, beta2_, eps_;
  long steps_ = 0;
};

struct DecodeOptions {
  int beam_width = 1;  // 1 = greedy
  double length_norm_exponent = 1.0;
};

struct TrainParams {
  Phase phase = Phase::FtAll;
  int epochs = 15;
  double learning_rate = 1e-4;
  int batch_size = 16;
  std::uint64_t seed = 0;

  std::optional<PruneSchedule> gps;
  Grouping grouping = Grouping::PerMatrix;
  std::set<ResourceType> prune_scope;  // empty = all languages

  // Per-epoch BLEU snapshots on the given buckets (empty = no snapshots).
  int eval_interval = 0;
  std::vector<std::string> eval_buckets;
  int eval_pairs_per_direction = 16;
  DecodeOptions eval_decode;

  // Invoked after each epoch's optimizer steps (observation hook; tests use
  // it to snapshot mask state).
  std::function<void(int)> on_epoch_end;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  long steps = 0;
  std::map<std::string, double> bucket_bleu;  // snapshot, may be empty
  double wall_ms = 0.0;
  double wl_pair_sum_error = 0.0;  // max |w_src + w_tgt - 1| seen this epoch
};

struct RunLog {
  std::string phase;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string base_checkpoint;  // provenance of the starting weights
  long planned_steps = 0;       // epochs x sum over directions of ceil(n_d / B)
  long executed_steps = 0;
  std::vector<EpochRecord> epochs;
  std::vector<PruneLogRow> prune_log;

  // JSON-lines: one header record, then one record per epoch. Wall-clock is
  // the only non-deterministic field and is omitted when with_timing=false.
  std::string to_jsonl(bool with_timing = true) const;
};

// Full training run over single-direction batches (directions interleaved
// round-robin after a seeded shuffle). stack may be null for base-only
// phases. Throws NumericError naming the epoch/step if the loss goes
// non-finite.
RunLog train(const TrainParams& params, BaseModel& model, AdapterStack* stack,
             const std::vector<TranslationPair>& train_pairs,
             const std::vector<TranslationPair>& val_pairs, const ParallelCorpus& corpus);

// Greedy or beam decode of one source sequence; returns emitted tokens
// (language/eos specials stripped).
std::vector<int> decode(const BaseModel& model, const AdapterStack* stack,
                        const ParallelCorpus& corpus, const std::string& src_lang,
                        const std::string& tgt_lang, const std::vector<int>& src_sentence,
                        const DecodeOptions& opts);

// Per-direction corpus BLEU over the given pairs (grouped by direction).
std::vector<DirectionScore> evaluate(const BaseModel& model, const AdapterStack* stack,
                                     const ParallelCorpus& corpus,
                                     const std::vector<TranslationPair>& pairs,
                                     const DecodeOptions& opts);

// Builds encoder/decoder token streams for one pair: the encoder sees
// [lang(src)] + src + [eos]; the decoder input is [lang(tgt)] + tgt and the
// prediction targets are tgt + [eos].
struct EncodedPair {
  std::vector<int> src_ids, tgt_in, tgt_out;
};
EncodedPair encode_pair(const ParallelCorpus& corpus, const TranslationPair& pair);

}  // namespace lslab

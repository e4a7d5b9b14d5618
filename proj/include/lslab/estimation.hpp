// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "lslab/trainer.hpp"

namespace lslab {

// Eq-style importance score: pruned - ratio * total. Positive means the
// matrix was pruned beyond the target rate (a smaller subspace suffices);
// negative means it defended its parameters.
double importance_score(long total, long pruned, double ratio);

struct ScoreRow {
  std::string lang;
  Side side = Side::Encoder;
  int layer = 0;
  SiteKind kind = SiteKind::Q;
  long total = 0;
  long pruned = 0;
  double ratio = 0.0;
  double score = 0.0;
};

struct ScoreTable {
  Grouping grouping = Grouping::LayerwiseCrossLanguage;
  double ratio = 0.0;
  std::vector<ScoreRow> rows;  // deterministic order: site order, language order

  // Mean score per (language, side, kind) across layers: the heatmap data.
  struct HeatCell {
    std::string lang;
    Side side;
    SiteKind kind;
    double mean_score;
  };
  std::vector<HeatCell> heatmap() const;
  // Mean score per language over all rows.
  std::vector<std::pair<std::string, double>> language_means() const;

  std::string to_csv(const std::string& header_comment) const;
  std::string heatmap_csv(const std::string& header_comment) const;
};

// Reads end-of-run masks: one row per (B matrix) in the plan, scored against
// the plan's final ratio.
ScoreTable score_table_from_plan(const std::vector<PruneGroup>& plan, Grouping grouping,
                                 double ratio);

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
};

// Pearson r plus a two-sided permutation p-value (fixed seed, add-one
// smoothed: p = (1 + #{|r_perm| >= |r|}) / (1 + permutations)).
PearsonResult pearson_correlation(std::span<const double> xs, std::span<const double> ys,
                                  int permutations = 10000, std::uint64_t seed = 20240915);

// Full estimation run: builds rank-uniform adapters on all sites, trains with
// the gradual schedule over the requested grouping, and scores end-of-run
// masks. All languages must share one rank.
struct EstimateParams {
  Grouping grouping = Grouping::LayerwiseCrossLanguage;
  int rank = 8;
  // When a policy is given instead of a single rank it must resolve to one
  // shared value across the present languages; mixed ranks are rejected.
  std::optional<RankPolicy> rank_policy;
  PruneSchedule schedule;  // ratio defaults to 0.7 upstream
  TrainParams train;
};

struct EstimateResult {
  ScoreTable table;
  RunLog log;
  // Correlation of per-language mean score against log10 corpus size, per
  // (side, kind) and overall.
  struct CorrRow {
    std::string label;  // "enc.q", ..., "enc.AVG", "dec.AVG", "AVG"
    PearsonResult corr;
  };
  std::vector<CorrRow> correlations;
};

EstimateResult run_estimate(const EstimateParams& params, BaseModel& model,
                            const ParallelCorpus& corpus,
                            const std::vector<TranslationPair>& train_pairs,
                            const std::vector<TranslationPair>& val_pairs);

std::string correlation_csv(const std::vector<EstimateResult::CorrRow>& rows,
                            const std::string& header_comment);

}  // namespace lslab

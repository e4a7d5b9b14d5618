// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "lslab/lslo.hpp"

namespace lslab {

// Corpus-level BLEU on token-id sequences, scaled to 0..100. Geometric mean
// of modified n-gram precisions (n = 1..max_n) times the brevity penalty.
// If any higher-order match count is zero, precisions for n >= 2 switch to
// add-one smoothing ((m+1)/(t+1)); the unigram precision is never smoothed,
// so disjoint corpora score exactly 0.
double bleu(const std::vector<std::vector<int>>& candidates,
            const std::vector<std::vector<int>>& references, int max_n = 4);

struct DirectionScore {
  std::string src_lang, tgt_lang;
  double score = 0.0;
  int num_pairs = 0;
};

struct BleuReport {
  std::vector<DirectionScore> directions;             // sorted by label
  std::map<std::string, double> bucket_means;         // unweighted over directions
  double avg_buckets = 0.0;                           // unweighted over nonempty buckets
  double avg_directions = 0.0;                        // unweighted over directions
};

BleuReport bucket_report(const std::vector<DirectionScore>& scores,
                         const std::vector<LanguageSpec>& langs);

// One table row in the Table-1 layout: method label, #Params, bucket columns
// in resource order, then AVG (the bucket mean; the directions mean is kept
// in the JSON detail).
std::string report_csv(const BleuReport& report, const std::string& method_label,
                       long param_count, const std::string& header_comment);
std::string report_json(const BleuReport& report, const std::string& method_label,
                        long param_count);

}  // namespace lslab

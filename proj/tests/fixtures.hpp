// SPDX-License-Identifier: Apache-2.0
//
// Thresholds for statistical assertions. Values marked "established over 5
// seeds" were measured once on seeds 1..5 of the corresponding setup and
// frozen here; tests assert against the stored number, they do not re-derive
// it.
#pragma once

namespace lslab::fixtures {

// Symmetric two-language weight learning (the setup in
// "weight learning stays near half/half on a symmetric corpus"):
// max |w_src - 0.5| observed over 5 seeds was 0.030.
inline constexpr double kWlSymmetryBand = 0.10;

// Symmetric two-language layerwise estimation (the setup in
// "symmetric languages receive close importance scores"): max per-language
// mean-score gap observed over 5 seeds was 8.7 (rank-4 factors on a
// d_model=16 model).
inline constexpr double kScoreGapThreshold = 15.0;

// Untrained model on a nontrivial corpus stays below this BLEU.
inline constexpr double kUntrainedBleuCeiling = 50.0;

// "Declines or stagnates from the epoch-1 peak": final <= epoch1 + this.
inline constexpr double kStagnationTolerance = 0.5;

// Low-resource retention bound for the LSLo-vs-ft comparison (relative).
inline constexpr double kLowResourceRetention = 0.9;

}  // namespace lslab::fixtures

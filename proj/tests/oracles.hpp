// SPDX-License-Identifier: Apache-2.0
//
// Independent brute-force reference implementations, compiled only into the
// test binaries. They deliberately share no code with the production paths
// they validate, and they refuse large inputs so nothing in src/ can grow a
// dependency on them.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace lslab::oracle {

constexpr std::size_t kMaxInput = 1000;

// Corpus BLEU by explicit n-gram counting maps, long-double arithmetic.
double oracle_bleu(const std::vector<std::vector<int>>& candidates,
                   const std::vector<std::vector<int>>& references, int max_n = 4);

// Full-sort magnitude pruning of one flat value list; returns keep-mask.
std::vector<int> oracle_prune(const std::vector<double>& values, double ratio);

// Direct three-branch schedule evaluation.
double oracle_schedule(double target, int start_epoch, int ramp, int epoch);

// Textbook covariance/stddev formula, long double.
double oracle_pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Largest-remainder apportionment with explicit remainder bookkeeping.
std::vector<long> oracle_apportion(long total, const std::vector<double>& weights);

// Central finite differences of a scalar function of a flat parameter
// vector; independent of the production tape.
std::vector<double> oracle_fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> at, double eps);

}  // namespace lslab::oracle

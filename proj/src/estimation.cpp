// SPDX-License-Identifier: Apache-2.0
#include "lslab/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "lslab/errors.hpp"

namespace lslab {

double importance_score(long total, long pruned, double ratio) {
  if (total < 0 || pruned < 0 || pruned > total)
    throw ValueError("importance_score: need 0 <= pruned <= total");
  return static_cast<double>(pruned) - ratio * static_cast<double>(total);
}

std::vector<ScoreTable::HeatCell> ScoreTable::heatmap() const {
  std::map<std::tuple<std::string, Side, SiteKind>, std::pair<double, int>> acc;
  std::vector<std::tuple<std::string, Side, SiteKind>> order;
  for (const ScoreRow& r : rows) {
    auto key = std::make_tuple(r.lang, r.side, r.kind);
    if (!acc.count(key)) order.push_back(key);
    acc[key].first += r.score;
    acc[key].second += 1;
  }
  std::vector<HeatCell> out;
  for (const auto& key : order) {
    const auto& [sum, n] = acc[key];
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), sum / n});
  }
  return out;
}

std::vector<std::pair<std::string, double>> ScoreTable::language_means() const {
  std::map<std::string, std::pair<double, int>> acc;
  std::vector<std::string> order;
  for (const ScoreRow& r : rows) {
    if (!acc.count(r.lang)) order.push_back(r.lang);
    acc[r.lang].first += r.score;
    acc[r.lang].second += 1;
  }
  std::vector<std::pair<std::string, double>> out;
  for (const std::string& lang : order)
    out.emplace_back(lang, acc[lang].first / acc[lang].second);
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string ScoreTable::to_csv(const std::string& header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << "# " << header_comment << "\n";
  os << "language,side,layer,kind,total,pruned,ratio,score\n";
  for (const ScoreRow& r : rows)
    os << r.lang << "," << to_string(r.side) << "," << r.layer << "," << to_string(r.kind) << ","
       << r.total << "," << r.pruned << "," << fmt(r.ratio) << "," << fmt(r.score) << "\n";
  return os.str();
}

std::string ScoreTable::heatmap_csv(const std::string& header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << "# " << header_comment << "\n";
  os << "language,side,kind,mean_score\n";
  for (const HeatCell& c : heatmap())
    os << c.lang << "," << to_string(c.side) << "," << to_string(c.kind) << ","
       << fmt(c.mean_score) << "\n";
  return os.str();
}

ScoreTable score_table_from_plan(const std::vector<PruneGroup>& plan, Grouping grouping,
                                 double ratio) {
  ScoreTable table;
  table.grouping = grouping;
  table.ratio = ratio;
  for (const PruneGroup& g : plan) {
    for (const PruneMember& m : g.members) {
      ScoreRow row;
      row.lang = m.lang;
      row.side = m.site.side;
      row.layer = m.site.layer;
      row.kind = m.site.kind;
      row.total = static_cast<long>(m.B.numel());
      long zeros = 0;
      for (double v : m.mask.data())
        if (v == 0.0) ++zeros;
      row.pruned = zeros;
      row.ratio = ratio;
      row.score = importance_score(row.total, row.pruned, ratio);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

PearsonResult pearson_correlation(std::span<const double> xs, std::span<const double> ys,
                                  int permutations, std::uint64_t seed) {
  if (xs.size() != ys.size()) throw ValueError("pearson: length mismatch");
  if (xs.size() < 3) throw ValueError("pearson: need at least 3 points");

  std::size_t n = xs.size();
  auto corr = [n](std::span<const double> a, std::span<const double> b) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cov += (a[i] - ma) * (b[i] - mb);
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
    }
    return std::make_tuple(cov, va, vb);
  };

  auto [cov, va, vb] = corr(xs, ys);
  if (va == 0.0 || vb == 0.0)
    throw ValueError("pearson: degenerate input (zero variance)");
  PearsonResult res;
  res.r = cov / std::sqrt(va * vb);

  // Two-sided permutation test on shuffled ys.
  std::vector<double> perm(ys.begin(), ys.end());
  Rng rng = Rng(seed).split("pearson");
  long exceed = 0;
  for (int it = 0; it < permutations; ++it) {
    rng.shuffle(perm);
    auto [c2, v2a, v2b] = corr(xs, perm);
    double rp = c2 / std::sqrt(v2a * v2b);
    if (std::abs(rp) >= std::abs(res.r) - 1e-15) ++exceed;
  }
  res.p = static_cast<double>(1 + exceed) / static_cast<double>(1 + permutations);
  return res;
}

EstimateResult run_estimate(const EstimateParams& params, BaseModel& model,
                            const ParallelCorpus& corpus,
                            const std::vector<TranslationPair>& train_pairs,
                            const std::vector<TranslationPair>& val_pairs) {
  if (params.grouping == Grouping::PerMatrix)
    throw ConfigError("estimate: grouping must be layerwise or language-specific");

  std::vector<LanguageSpec> langs;
  for (const CorpusLanguage& cl : corpus.languages) langs.push_back(cl.spec);

  // Joint pruning pools only compare fairly when every language brings the
  // same rank.
  int rank = params.rank;
  if (params.rank_policy) {
    rank = params.rank_policy->rank_for(langs.front());
    for (const LanguageSpec& l : langs)
      if (params.rank_policy->rank_for(l) != rank)
        throw ConfigError("estimate: mixed ranks in estimation mode (language " + l.code +
                          " maps to rank " + std::to_string(params.rank_policy->rank_for(l)) +
                          ", expected " + std::to_string(rank) + ")");
  }

  Rng rng = Rng(params.train.seed).split("estimate_stack");
  AdapterStack stack = build_adapter_stack(enumerate_sites(model.config()), model, langs,
                                           RankPolicy::uniform(rank), Placement::All, rng);

  TrainParams tp = params.train;
  tp.phase = params.grouping == Grouping::LayerwiseCrossLanguage ? Phase::EstimateLayerwise
                                                                 : Phase::EstimateLangspec;
  tp.gps = params.schedule;
  tp.grouping = params.grouping;
  tp.prune_scope.clear();  // estimation pools every language

  EstimateResult result;
  result.log = train(tp, model, &stack, train_pairs, val_pairs, corpus);

  // Scores read the end-of-run masks.
  auto plan = build_prune_plan(stack, params.grouping, {});
  result.table = score_table_from_plan(plan, params.grouping, params.schedule.target_ratio);

  // Correlation of mean score vs log10 corpus size, per (side, kind) and
  // aggregated. Degenerate inputs (e.g. fewer than 3 languages) are skipped.
  auto lang_size = [&](const std::string& code) {
    return std::log10(std::max<double>(1.0, static_cast<double>(corpus.spec(code).corpus_size)));
  };
  auto add_corr = [&](const std::string& label, const std::map<std::string, std::pair<double, int>>& acc) {
    std::vector<double> xs, ys;
    for (const auto& [lang, sc] : acc) {
      xs.push_back(lang_size(lang));
      ys.push_back(sc.first / sc.second);
    }
    if (xs.size() < 3) return;
    try {
      result.correlations.push_back({label, pearson_correlation(xs, ys)});
    } catch (const ValueError&) {
      // zero variance: all languages equal; nothing to report
    }
  };

  std::map<std::string, std::map<std::string, std::pair<double, int>>> by_side_kind;
  std::map<std::string, std::map<std::string, std::pair<double, int>>> by_side;
  std::map<std::string, std::pair<double, int>> overall;
  for (const ScoreRow& r : result.table.rows) {
    std::string sk = std::string(to_string(r.side)) + "." + to_string(r.kind);
    by_side_kind[sk][r.lang].first += r.score;
    by_side_kind[sk][r.lang].second += 1;
    by_side[to_string(r.side)][r.lang].first += r.score;
    by_side[to_string(r.side)][r.lang].second += 1;
    overall[r.lang].first += r.score;
    overall[r.lang].second += 1;
  }
  for (const auto& [sk, acc] : by_side_kind) add_corr(sk, acc);
  for (const auto& [side, acc] : by_side) add_corr(side + ".AVG", acc);
  add_corr("AVG", overall);
  return result;
}

std::string correlation_csv(const std::vector<EstimateResult::CorrRow>& rows,
                            const std::string& header_comment) {
  std::ostringstream os;
  if (!header_comment.empty()) os << "# " << header_comment << "\n";
  os << "module,r,p\n";
  for (const auto& row : rows)
    os << row.label << "," << fmt(row.corr.r) << "," << fmt(row.corr.p) << "\n";
  return os.str();
}

}  // namespace lslab

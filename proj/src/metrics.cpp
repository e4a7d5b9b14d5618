// SPDX-License-Identifier: Apache-2.0
#include "lslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "lslab/data.hpp"
#include "lslab/errors.hpp"

namespace lslab {

double bleu(const std::vector<std::vector<int>>& candidates,
            const std::vector<std::vector<int>>& references, int max_n) {
  if (candidates.size() != references.size())
    throw ValueError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                     std::to_string(references.size()) + " references");
  if (candidates.empty()) throw ValueError("bleu: empty corpus");
  if (max_n < 1) throw ValueError("bleu: max_n must be >= 1");

  std::vector<long> matches(static_cast<std::size_t>(max_n), 0);
  std::vector<long> totals(static_cast<std::size_t>(max_n), 0);
  long cand_len = 0, ref_len = 0;

  using Ngram = std::vector<int>;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& r = references[i];
    cand_len += static_cast<long>(c.size());
    ref_len += static_cast<long>(r.size());
    for (int n = 1; n <= max_n; ++n) {
      std::map<Ngram, long> ref_counts;
      if (r.size() >= static_cast<std::size_t>(n))
        for (std::size_t j = 0; j + n <= r.size(); ++j)
          ++ref_counts[Ngram(r.begin() + static_cast<long>(j), r.begin() + static_cast<long>(j) + n)];
      std::map<Ngram, long> cand_counts;
      if (c.size() >= static_cast<std::size_t>(n))
        for (std::size_t j = 0; j + n <= c.size(); ++j)
          ++cand_counts[Ngram(c.begin() + static_cast<long>(j), c.begin() + static_cast<long>(j) + n)];
      for (const auto& [g, cnt] : cand_counts) {
        totals[static_cast<std::size_t>(n - 1)] += cnt;
        auto it = ref_counts.find(g);
        if (it != ref_counts.end())
          matches[static_cast<std::size_t>(n - 1)] += std::min(cnt, it->second);
      }
    }
  }

  if (cand_len == 0) return 0.0;
  if (matches[0] == 0) return 0.0;

  bool smooth = false;
  for (int n = 2; n <= max_n; ++n)
    if (matches[static_cast<std::size_t>(n - 1)] == 0) smooth = true;

  double log_prec = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    long m = matches[static_cast<std::size_t>(n - 1)];
    long t = totals[static_cast<std::size_t>(n - 1)];
    double p;
    if (n >= 2 && smooth)
      p = static_cast<double>(m + 1) / static_cast<double>(t + 1);
    else
      p = static_cast<double>(m) / static_cast<double>(t);
    log_prec += std::log(p);
  }
  double bp = cand_len < ref_len
                  ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                  : 1.0;
  return 100.0 * bp * std::exp(log_prec / max_n);
}

BleuReport bucket_report(const std::vector<DirectionScore>& scores,
                         const std::vector<LanguageSpec>& langs) {
  auto type_of = [&](const std::string& code) {
    for (const LanguageSpec& l : langs)
      if (l.code == code) return l.resource_type;
    throw ValueError("bucket_report: unknown language \"" + code + "\"");
  };

  BleuReport rep;
  rep.directions = scores;
  std::sort(rep.directions.begin(), rep.directions.end(),
            [](const DirectionScore& a, const DirectionScore& b) {
              return direction_label(a.src_lang, a.tgt_lang) < direction_label(b.src_lang, b.tgt_lang);
            });

  std::map<std::string, std::pair<double, int>> acc;
  double dir_sum = 0.0;
  for (const DirectionScore& d : rep.directions) {
    std::string bucket = bucket_of(type_of(d.src_lang), type_of(d.tgt_lang));
    acc[bucket].first += d.score;
    acc[bucket].second += 1;
    dir_sum += d.score;
  }
  double bucket_sum = 0.0;
  for (const auto& [bucket, sc] : acc) {
    double mean = sc.first / sc.second;
    rep.bucket_means[bucket] = mean;
    bucket_sum += mean;
  }
  rep.avg_buckets = acc.empty() ? 0.0 : bucket_sum / static_cast<double>(acc.size());
  rep.avg_directions =
      rep.directions.empty() ? 0.0 : dir_sum / static_cast<double>(rep.directions.size());
  return rep;
}

namespace {

// Bucket column order follows the tables: resource order H, M, L, V on both
// axes, restricted to buckets present.
std::vector<std::string> ordered_buckets(const BleuReport& rep) {
  static const char letters[] = {'H', 'M', 'L', 'V'};
  std::vector<std::string> out;
  for (char a : letters)
    for (char b : letters) {
      std::string key = std::string(1, a) + "2" + b;
      if (rep.bucket_means.count(key)) out.push_back(key);
    }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string report_csv(const BleuReport& report, const std::string& method_label,
                       long param_count, const std::string& header_comment) {
  std::ostringstream os;
  if (!header_comment.empty()) os << "# " << header_comment << "\n";
  os << "method,params";
  auto buckets = ordered_buckets(report);
  for (const std::string& b : buckets) os << "," << b;
  os << ",AVG\n";
  os << method_label << "," << param_count;
  for (const std::string& b : buckets) os << "," << fmt(report.bucket_means.at(b));
  os << "," << fmt(report.avg_buckets) << "\n";
  return os.str();
}

std::string report_json(const BleuReport& report, const std::string& method_label,
                        long param_count) {
  nlohmann::json dirs = nlohmann::json::array();
  for (const DirectionScore& d : report.directions)
    dirs.push_back({{"src", d.src_lang},
                    {"tgt", d.tgt_lang},
                    {"score", d.score},
                    {"pairs", d.num_pairs}});
  nlohmann::json j = {{"method", method_label},
                      {"params", param_count},
                      {"directions", dirs},
                      {"bucket_means", report.bucket_means},
                      {"avg_buckets", report.avg_buckets},
                      {"avg_directions", report.avg_directions}};
  return j.dump(2) + "\n";
}

}  // namespace lslab

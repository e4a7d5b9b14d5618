// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "lslab/errors.hpp"
#include "lslab/metrics.hpp"
#include "oracles.hpp"

using namespace lslab;

namespace {

using Corpus = std::vector<std::vector<int>>;

Corpus random_corpus(Rng& rng, std::size_t pairs, int vocab, int max_len) {
  Corpus out;
  for (std::size_t i = 0; i < pairs; ++i) {
    std::size_t len = 1 + rng.uniform_int(static_cast<std::uint64_t>(max_len));
    std::vector<int> s(len);
    for (int& t : s) t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab)));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("bleu identity and disjoint extremes") {
  Corpus refs{{1, 2, 3, 4, 5}, {7, 8}, {9}};
  CHECK(bleu(refs, refs) == 100.0);
  Corpus disjoint{{10, 11, 12, 13, 14}, {15, 16}, {17}};
  CHECK(bleu(disjoint, refs) == 0.0);
}

TEST_CASE("bleu single-pair value frozen from the n-gram oracle") {
  Corpus cand{{1, 2, 3, 4, 5}};
  Corpus ref{{1, 2, 3, 4, 6}};
  // Precisions 4/5, 3/4, 2/3, 1/2; no zero counts, no smoothing, BP = 1.
  double expect = 66.8740304976422024;
  CHECK(std::abs(bleu(cand, ref) - expect) <= 1e-9);
  CHECK(std::abs(oracle::oracle_bleu(cand, ref) - expect) <= 1e-9);
}

TEST_CASE("bleu equals the brute-force oracle on random corpora") {
  Rng rng(321);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.uniform_int(6);
    Corpus refs = random_corpus(rng, n, 8, 9);
    Corpus cands = random_corpus(rng, n, 8, 9);
    CHECK(std::abs(bleu(cands, refs) - oracle::oracle_bleu(cands, refs)) <= 1e-9);
  }
}

TEST_CASE("bleu is permutation invariant over the pair list") {
  Rng rng(55);
  Corpus refs = random_corpus(rng, 6, 10, 8);
  Corpus cands = random_corpus(rng, 6, 10, 8);
  double base = bleu(cands, refs);
  std::vector<std::size_t> order{5, 3, 0, 1, 4, 2};
  Corpus refs2, cands2;
  for (std::size_t i : order) {
    refs2.push_back(refs[i]);
    cands2.push_back(cands[i]);
  }
  CHECK(bleu(cands2, refs2) == base);
}

TEST_CASE("bleu is invariant under bijective token renaming") {
  Rng rng(56);
  Corpus refs = random_corpus(rng, 5, 10, 8);
  Corpus cands = random_corpus(rng, 5, 10, 8);
  double base = bleu(cands, refs);
  auto rename = [](Corpus c) {
    for (auto& s : c)
      for (int& t : s) t = 1000 - 7 * t;  // injective on 0..9
    return c;
  };
  CHECK(bleu(rename(cands), rename(refs)) == base);
}

TEST_CASE("bleu bounds and the brevity penalty side") {
  Rng rng(57);
  for (int trial = 0; trial < 100; ++trial) {
    Corpus refs = random_corpus(rng, 3, 6, 7);
    Corpus cands = random_corpus(rng, 3, 6, 7);
    double v = bleu(cands, refs);
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
    if (cands != refs) CHECK(v < 100.0);
  }
  CHECK_THROWS_AS(bleu({{1}}, {{1}, {2}}), ValueError);
  CHECK_THROWS_AS(bleu({}, {}), ValueError);
}

TEST_CASE("bucket report aggregates by resource pair") {
  std::vector<LanguageSpec> langs{{"aa", ResourceType::High, 0, 1},
                                  {"bb", ResourceType::High, 0, 1},
                                  {"cc", ResourceType::Medium, 0, 1},
                                  {"dd", ResourceType::VeryLow, 0, 1}};
  SUBCASE("constant scores propagate everywhere") {
    // Two languages per type so every one of the 3x3 buckets is populated.
    std::vector<LanguageSpec> six{
        {"aa", ResourceType::High, 0, 1},    {"bb", ResourceType::High, 0, 1},
        {"cc", ResourceType::Medium, 0, 1},  {"dd", ResourceType::Medium, 0, 1},
        {"ee", ResourceType::VeryLow, 0, 1}, {"ff", ResourceType::VeryLow, 0, 1}};
    std::vector<DirectionScore> scores;
    for (const auto& s : six)
      for (const auto& t : six)
        if (s.code != t.code) scores.push_back({s.code, t.code, 10.0, 4});
    BleuReport rep = bucket_report(scores, six);
    CHECK(rep.bucket_means.size() == 9);  // 3 resource types present
    for (const auto& [bucket, mean] : rep.bucket_means) CHECK(mean == 10.0);
    CHECK(rep.avg_buckets == 10.0);
    CHECK(rep.avg_directions == 10.0);
  }
  SUBCASE("single-direction buckets pass raw scores through") {
    std::vector<DirectionScore> scores{{"aa", "cc", 42.5, 4}, {"cc", "dd", 7.25, 4}};
    BleuReport rep = bucket_report(scores, langs);
    CHECK(rep.bucket_means.at("H2M") == 42.5);
    CHECK(rep.bucket_means.at("M2V") == 7.25);
    CHECK(rep.avg_buckets == doctest::Approx((42.5 + 7.25) / 2));
  }
  SUBCASE("bucket mean vs direction mean differ when buckets are uneven") {
    std::vector<DirectionScore> scores{
        {"aa", "bb", 30.0, 4}, {"bb", "aa", 10.0, 4}, {"aa", "cc", 5.0, 4}};
    BleuReport rep = bucket_report(scores, langs);
    CHECK(rep.bucket_means.at("H2H") == 20.0);
    CHECK(rep.avg_buckets == doctest::Approx(12.5));          // (20 + 5) / 2
    CHECK(rep.avg_directions == doctest::Approx(15.0));       // (30+10+5)/3
  }
}

TEST_CASE("report csv carries the method row and bucket columns") {
  std::vector<LanguageSpec> langs{{"aa", ResourceType::High, 0, 1},
                                  {"bb", ResourceType::VeryLow, 0, 1}};
  std::vector<DirectionScore> scores{{"aa", "bb", 12.0, 4}, {"bb", "aa", 8.0, 4}};
  BleuReport rep = bucket_report(scores, langs);
  std::string csv = report_csv(rep, "2;2;8+WL+GPS(0.9)", 15300000, "config=x seed=1 format=1");
  CHECK(csv.find("# config=x seed=1 format=1\n") == 0);
  CHECK(csv.find("method,params,H2V,V2H,AVG") != std::string::npos);
  CHECK(csv.find("2;2;8+WL+GPS(0.9),15300000,12.000000,8.000000,10.000000") != std::string::npos);
}

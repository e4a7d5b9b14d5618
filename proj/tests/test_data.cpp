// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "lslab/data.hpp"
#include "lslab/errors.hpp"
#include "oracles.hpp"

using namespace lslab;

namespace {

CorpusSpec four_lang_spec() {
  CorpusSpec spec;
  spec.languages = {{{"aa", ResourceType::High, 1000, 1}, "f1", false},
                    {{"bb", ResourceType::High, 1000, 1}, "f1", false},
                    {{"cc", ResourceType::Medium, 100, 1}, "f2", true},
                    {{"dd", ResourceType::VeryLow, 10, 1}, "f2", false}};
  spec.num_sets = 1300;
  spec.meaning_vocab = 20;
  spec.min_len = 3;
  spec.max_len = 6;
  return spec;
}

}  // namespace

TEST_CASE("same seed gives a byte-identical corpus") {
  CorpusSpec spec = four_lang_spec();
  ParallelCorpus a = generate_corpus(spec, 99);
  ParallelCorpus b = generate_corpus(spec, 99);
  ParallelCorpus c = generate_corpus(spec, 100);
  CHECK(a.sentences == b.sentences);
  CHECK(a.vocab_size == b.vocab_size);
  CHECK(a.sentences != c.sentences);
}

TEST_CASE("identity transforms make translation a copy") {
  CorpusSpec spec;
  spec.languages = {{{"aa", ResourceType::High, 10, 1}, "same", false},
                    {{"bb", ResourceType::High, 10, 1}, "same", false}};
  spec.num_sets = 20;
  spec.meaning_vocab = 15;
  spec.min_len = 3;
  spec.max_len = 5;
  spec.family_share = 1.0;  // full table sharing
  spec.use_affix = false;
  ParallelCorpus corpus = generate_corpus(spec, 5);
  for (const auto& set : corpus.sentences) CHECK(set[0] == set[1]);
}

TEST_CASE("substitution tables are per-position bijections") {
  ParallelCorpus corpus = generate_corpus(four_lang_spec(), 7);
  // Languages without reorder or affix removed: token at position i of
  // language x determines token at position i of language y. Collect the
  // induced map aa->bb over all sets and check it is a function and
  // injective, i.e. decoding recovers the base sequence exactly.
  std::map<int, int> forward;
  std::map<int, int> inverse;
  for (const auto& set : corpus.sentences) {
    const auto& sa = set[0];
    const auto& sb = set[1];
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i + 1 < sa.size(); ++i) {  // last token is the affix
      auto [it, inserted] = forward.emplace(sa[i], sb[i]);
      if (!inserted) CHECK(it->second == sb[i]);
      auto [it2, inserted2] = inverse.emplace(sb[i], sa[i]);
      if (!inserted2) CHECK(it2->second == sa[i]);
    }
  }
  CHECK(forward.size() == inverse.size());
}

TEST_CASE("family sharing controls table overlap") {
  ParallelCorpus corpus = generate_corpus(four_lang_spec(), 7);
  // aa and bb share family f1 with share 0.8: most aligned positions carry
  // identical tokens. aa and cc are unrelated: none do (disjoint pools).
  long same_fam = 0, cross_fam = 0, positions = 0;
  for (const auto& set : corpus.sentences) {
    for (std::size_t i = 0; i + 1 < set[0].size(); ++i) {
      ++positions;
      if (set[0][i] == set[1][i]) ++same_fam;
      if (set[0][i] == set[2][i]) ++cross_fam;
    }
  }
  CHECK(same_fam > positions / 2);
  CHECK(cross_fam == 0);
}

TEST_CASE("all sequences leave room for the language token and eos") {
  CorpusSpec spec = four_lang_spec();
  ParallelCorpus corpus = generate_corpus(spec, 7);
  // max content + affix = max_len + 1; the model needs two more slots.
  CHECK(corpus.max_sequence_len() <= spec.max_len + 1 + 2);
  for (const auto& set : corpus.sentences)
    for (const auto& s : set) CHECK(static_cast<int>(s.size()) <= spec.max_len + 1);
}

TEST_CASE("largest remainder apportionment") {
  CHECK(apportion_largest_remainder(1000, {1, 1, 1}) == std::vector<long>{334, 333, 333});
  CHECK(apportion_largest_remainder(0, {1, 2}) == std::vector<long>{0, 0});
  CHECK_THROWS_AS(apportion_largest_remainder(5, {}), ValueError);
  CHECK_THROWS_AS(apportion_largest_remainder(5, {0.0, 0.0}), ValueError);

  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng.uniform_int(6);
    std::vector<double> w(n);
    for (double& x : w) x = 0.1 + rng.uniform() * 10.0;
    long total = static_cast<long>(rng.uniform_int(5000));
    auto got = apportion_largest_remainder(total, w);
    auto expect = oracle::oracle_apportion(total, w);
    CHECK(got == expect);
    long sum = 0;
    double wsum = 0;
    for (double x : w) wsum += x;
    for (std::size_t i = 0; i < n; ++i) {
      sum += got[i];
      double exact = static_cast<double>(total) * w[i] / wsum;
      CHECK(std::abs(static_cast<double>(got[i]) - exact) <= 1.0);  // balance law
    }
    CHECK(sum == total);
  }
}

TEST_CASE("proportional dataset spends each language's target budget") {
  ParallelCorpus corpus = generate_corpus(four_lang_spec(), 7);
  DatasetOptions opts;
  opts.mode = SamplingMode::Proportional;
  auto pairs = build_dataset(corpus, opts, 3);

  std::map<std::string, long> as_target;
  std::map<std::string, long> per_direction;
  std::set<std::string> directions;
  for (const TranslationPair& p : pairs) {
    ++as_target[p.tgt_lang];
    ++per_direction[direction_label(p.src_lang, p.tgt_lang)];
    directions.insert(direction_label(p.src_lang, p.tgt_lang));
  }
  CHECK(as_target["aa"] == 1000);
  CHECK(as_target["bb"] == 1000);
  CHECK(as_target["cc"] == 100);
  CHECK(as_target["dd"] == 10);
  CHECK(directions.size() == 12);  // n(n-1)
  // Per-direction counts stay within one of the even split of the budget.
  for (const auto& [dir, count] : per_direction) {
    std::string tgt = dir.substr(dir.find("->") + 2);
    double exact = static_cast<double>(as_target[tgt]) / 3.0;
    CHECK(std::abs(static_cast<double>(count) - exact) <= 1.0);
  }
}

TEST_CASE("zero-budget languages appear in no pair") {
  CorpusSpec spec = four_lang_spec();
  spec.languages[3].spec.corpus_size = 0;  // dd
  ParallelCorpus corpus = generate_corpus(spec, 7);
  DatasetOptions opts;
  opts.mode = SamplingMode::Proportional;
  auto pairs = build_dataset(corpus, opts, 3);
  for (const TranslationPair& p : pairs) {
    CHECK(p.src_lang != "dd");
    CHECK(p.tgt_lang != "dd");
  }
}

TEST_CASE("uniform quota and split discipline") {
  ParallelCorpus corpus = generate_corpus(four_lang_spec(), 7);
  DatasetOptions opts;
  opts.mode = SamplingMode::Uniform;
  opts.uniform_quota = 16;
  opts.split = Split::Holdout;
  auto pairs = build_dataset(corpus, opts, 3);
  CHECK(pairs.size() == 12 * 16);
  for (const TranslationPair& p : pairs) CHECK(p.set_id >= corpus.train_sets);

  opts.split = Split::Train;
  for (const TranslationPair& p : build_dataset(corpus, opts, 3))
    CHECK(p.set_id < corpus.train_sets);

  // Quota beyond the split size is a config error.
  opts.uniform_quota = 100000;
  CHECK_THROWS_AS(build_dataset(corpus, opts, 3), ConfigError);
}

TEST_CASE("alignment: pairs carry the aligned sentences of one set") {
  ParallelCorpus corpus = generate_corpus(four_lang_spec(), 7);
  DatasetOptions opts;
  opts.mode = SamplingMode::Uniform;
  opts.uniform_quota = 8;
  for (const TranslationPair& p : build_dataset(corpus, opts, 3)) {
    const auto& set = corpus.sentences[static_cast<std::size_t>(p.set_id)];
    CHECK(set[static_cast<std::size_t>(corpus.lang_index(p.src_lang))] == p.src);
    CHECK(set[static_cast<std::size_t>(corpus.lang_index(p.tgt_lang))] == p.tgt);
  }
}

TEST_CASE("direction filters") {
  ParallelCorpus corpus = generate_corpus(four_lang_spec(), 7);
  DatasetOptions opts;
  opts.mode = SamplingMode::Uniform;
  opts.uniform_quota = 4;
  opts.directions = std::vector<std::pair<std::string, std::string>>{{"aa", "bb"}};
  auto pairs = build_dataset(corpus, opts, 3);
  CHECK(pairs.size() == 4);
  for (const TranslationPair& p : pairs) {
    CHECK(p.src_lang == "aa");
    CHECK(p.tgt_lang == "bb");
  }

  opts.directions = std::vector<std::pair<std::string, std::string>>{};
  CHECK_THROWS_AS(build_dataset(corpus, opts, 3), ConfigError);
  opts.directions = std::vector<std::pair<std::string, std::string>>{{"aa", "aa"}};
  CHECK_THROWS_AS(build_dataset(corpus, opts, 3), ConfigError);
}

TEST_CASE("bucket labels") {
  CHECK(bucket_of(ResourceType::High, ResourceType::High) == "H2H");
  CHECK(bucket_of(ResourceType::VeryLow, ResourceType::Medium) == "V2M");
  CHECK(bucket_of(ResourceType::High, ResourceType::VeryLow) == "H2V");
  std::set<std::string> buckets;
  for (ResourceType a : {ResourceType::High, ResourceType::Medium, ResourceType::Low,
                         ResourceType::VeryLow})
    for (ResourceType b : {ResourceType::High, ResourceType::Medium, ResourceType::Low,
                           ResourceType::VeryLow})
      buckets.insert(bucket_of(a, b));
  CHECK(buckets.size() == 16);
}

TEST_CASE("corpus round-trips through the line format and manifest") {
  namespace fs = std::filesystem;
  ParallelCorpus corpus = generate_corpus(four_lang_spec(), 7);
  std::string dir = (fs::temp_directory_path() / "lslab_data_test").string();
  fs::create_directories(dir);
  write_corpus(corpus, dir + "/corpus.txt", dir + "/manifest.json", 7, "cafebabe");
  ParallelCorpus back = read_corpus(dir + "/corpus.txt", dir + "/manifest.json");
  CHECK(back.sentences == corpus.sentences);
  CHECK(back.vocab_size == corpus.vocab_size);
  CHECK(back.lang_token == corpus.lang_token);
  CHECK(back.train_sets == corpus.train_sets);
  CHECK(back.languages.size() == corpus.languages.size());
  CHECK_THROWS_AS(read_corpus(dir + "/nope.txt", dir + "/nope.json"), MissingError);
  fs::remove_all(dir);
}

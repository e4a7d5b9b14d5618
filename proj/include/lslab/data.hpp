// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lslab/lslo.hpp"

namespace lslab {

// Per-language generation knobs on top of the core LanguageSpec: languages
// sharing a family share part of their substitution tables; reorder applies
// a local adjacent-swap to model distant word orders.
struct CorpusLanguage {
  LanguageSpec spec;
  std::string family;
  bool reorder = false;
};

struct CorpusSpec {
  std::vector<CorpusLanguage> languages;
  int num_sets = 0;          // m
  int meaning_vocab = 30;    // base alphabet size
  int min_len = 4;           // meaning length bounds (content tokens)
  int max_len = 8;
  double family_share = 0.8; // fraction of the table shared within a family
  bool use_affix = true;     // append a language-characteristic token
  double holdout_fraction = 0.2;

  void validate() const;
};

// Aligned sentence sets over a shared vocabulary. Tokens are
//   0 = pad, 1 = eos, 2..2+n = language tokens, then content/affix tokens
// assigned in deterministic first-use order.
struct ParallelCorpus {
  std::vector<CorpusLanguage> languages;
  int vocab_size = 0;
  int pad_id = 0;
  int eos_id = 1;
  std::map<std::string, int> lang_token;          // code -> token id
  std::vector<std::vector<int>> meanings;         // latent base sequences
  // sentences[set][lang index] = realized token sequence
  std::vector<std::vector<std::vector<int>>> sentences;
  int train_sets = 0;  // sets [0, train_sets) train; the rest are held out

  int lang_index(const std::string& code) const;
  const LanguageSpec& spec(const std::string& code) const;
  int holdout_sets() const { return static_cast<int>(sentences.size()) - train_sets; }
  // Longest realized sentence plus language token and eos.
  int max_sequence_len() const;
};

ParallelCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed);

struct TranslationPair {
  std::string src_lang, tgt_lang;
  std::vector<int> src, tgt;  // content(+affix) tokens, no specials
  int set_id = 0;
};

enum class SamplingMode { Proportional, Uniform };
SamplingMode sampling_from_string(const std::string& s);

enum class Split { Train, Holdout };

struct DatasetOptions {
  SamplingMode mode = SamplingMode::Proportional;
  long uniform_quota = 0;  // per-direction pair count in Uniform mode
  Split split = Split::Train;
  // Optional direction whitelist; empty optional = all ordered pairs.
  std::optional<std::vector<std::pair<std::string, std::string>>> directions;
};

// Many-to-many pairs. Proportional mode spends each language's corpus_size as
// its target-side budget, split across incoming sources by largest-remainder
// apportionment; Uniform mode gives every direction the same quota.
std::vector<TranslationPair> build_dataset(const ParallelCorpus& corpus,
                                           const DatasetOptions& options, std::uint64_t seed);

// Largest-remainder apportionment of total into weighted integer shares.
std::vector<long> apportion_largest_remainder(long total, const std::vector<double>& weights);

// Resource bucket label, e.g. (High, VeryLow) -> "H2V".
std::string bucket_of(ResourceType src, ResourceType tgt);
std::string bucket_of(const LanguageSpec& src, const LanguageSpec& tgt);

std::string direction_label(const std::string& src, const std::string& tgt);

// Corpus persistence: line-oriented text (set_id lang_code tokens...) plus a
// JSON manifest carrying languages, vocabulary metadata, and the split.
void write_corpus(const ParallelCorpus& corpus, const std::string& corpus_path,
                  const std::string& manifest_path, std::uint64_t seed,
                  const std::string& config_hash);
ParallelCorpus read_corpus(const std::string& corpus_path, const std::string& manifest_path);

}  // namespace lslab

// SPDX-License-Identifier: Apache-2.0
#include "lslab/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lslab/errors.hpp"

namespace lslab {

using nlohmann::json;

void CorpusSpec::validate() const {
  if (languages.empty()) throw ConfigError("corpus: no languages");
  if (num_sets < 1) throw ConfigError("corpus: num_sets must be >= 1");
  if (meaning_vocab < 1) throw ConfigError("corpus: meaning_vocab must be >= 1");
  if (min_len < 1 || max_len < min_len) throw ConfigError("corpus: bad length bounds");
  if (family_share < 0.0 || family_share > 1.0)
    throw ConfigError("corpus: family_share must be in [0, 1]");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw ConfigError("corpus: holdout_fraction must be in [0, 1)");
  for (std::size_t i = 0; i < languages.size(); ++i) {
    if (languages[i].spec.code.empty()) throw ConfigError("corpus: empty language code");
    if (languages[i].spec.corpus_size < 0)
      throw ConfigError("corpus: negative corpus_size for " + languages[i].spec.code);
    for (std::size_t j = i + 1; j < languages.size(); ++j)
      if (languages[i].spec.code == languages[j].spec.code)
        throw ConfigError("corpus: duplicate language code " + languages[i].spec.code);
  }
}

int ParallelCorpus::lang_index(const std::string& code) const {
  for (std::size_t i = 0; i < languages.size(); ++i)
    if (languages[i].spec.code == code) return static_cast<int>(i);
  throw ValueError("corpus has no language \"" + code + "\"");
}

const LanguageSpec& ParallelCorpus::spec(const std::string& code) const {
  return languages[static_cast<std::size_t>(lang_index(code))].spec;
}

int ParallelCorpus::max_sequence_len() const {
  std::size_t mx = 0;
  for (const auto& set : sentences)
    for (const auto& s : set) mx = std::max(mx, s.size());
  return static_cast<int>(mx) + 2;
}

namespace {

// Abstract substitution target before vocabulary interning.
struct Sym {
  std::string pool;  // family name or private "lang:<code>"
  int index;
  bool operator<(const Sym& o) const { return std::tie(pool, index) < std::tie(o.pool, o.index); }
};

}  // namespace

ParallelCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng root(seed);

  ParallelCorpus corpus;
  corpus.languages = spec.languages;
  int n_langs = static_cast<int>(spec.languages.size());

  // Latent meanings.
  Rng mr = root.split("meanings");
  corpus.meanings.reserve(static_cast<std::size_t>(spec.num_sets));
  for (int s = 0; s < spec.num_sets; ++s) {
    int len = spec.min_len +
              static_cast<int>(mr.uniform_int(static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
    std::vector<int> m(static_cast<std::size_t>(len));
    for (int& t : m) t = static_cast<int>(mr.uniform_int(static_cast<std::uint64_t>(spec.meaning_vocab)));
    corpus.meanings.push_back(std::move(m));
  }

  // Per-family shared symbol subsets.
  std::map<std::string, std::vector<bool>> family_shared;
  for (const CorpusLanguage& cl : spec.languages) {
    if (cl.family.empty() || family_shared.count(cl.family)) continue;
    Rng fr = root.split("family:" + cl.family);
    std::vector<int> order(static_cast<std::size_t>(spec.meaning_vocab));
    std::iota(order.begin(), order.end(), 0);
    fr.shuffle(order);
    int n_shared = static_cast<int>(std::lround(spec.family_share * spec.meaning_vocab));
    std::vector<bool> shared(static_cast<std::size_t>(spec.meaning_vocab), false);
    for (int i = 0; i < n_shared; ++i) shared[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
    family_shared.emplace(cl.family, std::move(shared));
  }

  // Substitution tables in symbol space: shared symbols resolve to the family
  // pool so related languages agree on them.
  std::vector<std::vector<Sym>> tables(static_cast<std::size_t>(n_langs));
  std::vector<Sym> affixes(static_cast<std::size_t>(n_langs));
  for (int li = 0; li < n_langs; ++li) {
    const CorpusLanguage& cl = spec.languages[static_cast<std::size_t>(li)];
    std::string priv = "lang:" + cl.spec.code;
    auto& table = tables[static_cast<std::size_t>(li)];
    table.reserve(static_cast<std::size_t>(spec.meaning_vocab));
    const std::vector<bool>* shared =
        cl.family.empty() ? nullptr : &family_shared.at(cl.family);
    for (int s = 0; s < spec.meaning_vocab; ++s) {
      if (shared && (*shared)[static_cast<std::size_t>(s)])
        table.push_back({cl.family, s});
      else
        table.push_back({priv, s});
    }
    affixes[static_cast<std::size_t>(li)] = {priv, spec.meaning_vocab};  // one id past the table
  }

  // Intern symbols into token ids: specials, language tokens, then first use.
  std::map<Sym, int> interned;
  int next_id = 2;  // 0 pad, 1 eos
  for (const CorpusLanguage& cl : spec.languages) corpus.lang_token[cl.spec.code] = next_id++;
  auto intern = [&](const Sym& s) {
    auto it = interned.find(s);
    if (it != interned.end()) return it->second;
    interned.emplace(s, next_id);
    return next_id++;
  };
  for (int li = 0; li < n_langs; ++li) {
    for (const Sym& s : tables[static_cast<std::size_t>(li)]) intern(s);
    if (spec.use_affix) intern(affixes[static_cast<std::size_t>(li)]);
  }
  corpus.vocab_size = next_id;

  // Realize sentences.
  corpus.sentences.reserve(corpus.meanings.size());
  for (const std::vector<int>& meaning : corpus.meanings) {
    std::vector<std::vector<int>> per_lang;
    per_lang.reserve(static_cast<std::size_t>(n_langs));
    for (int li = 0; li < n_langs; ++li) {
      const CorpusLanguage& cl = spec.languages[static_cast<std::size_t>(li)];
      std::vector<int> s;
      s.reserve(meaning.size() + 1);
      for (int base : meaning)
        s.push_back(interned.at(tables[static_cast<std::size_t>(li)][static_cast<std::size_t>(base)]));
      if (cl.reorder) {
        for (std::size_t i = 0; i + 1 < s.size(); i += 2) std::swap(s[i], s[i + 1]);
      }
      if (spec.use_affix) s.push_back(interned.at(affixes[static_cast<std::size_t>(li)]));
      per_lang.push_back(std::move(s));
    }
    corpus.sentences.push_back(std::move(per_lang));
  }

  int holdout = static_cast<int>(std::lround(spec.holdout_fraction * spec.num_sets));
  corpus.train_sets = spec.num_sets - holdout;
  if (corpus.train_sets < 1) throw ConfigError("corpus: holdout fraction leaves no training sets");
  return corpus;
}

SamplingMode sampling_from_string(const std::string& s) {
  if (s == "proportional") return SamplingMode::Proportional;
  if (s == "uniform") return SamplingMode::Uniform;
  throw ConfigError("unknown sampling mode: " + s);
}

std::vector<long> apportion_largest_remainder(long total, const std::vector<double>& weights) {
  if (weights.empty()) throw ValueError("apportion: no weights");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ValueError("apportion: negative weight");
    wsum += w;
  }
  if (total < 0) throw ValueError("apportion: negative total");
  std::vector<long> out(weights.size(), 0);
  if (total == 0) return out;
  if (wsum == 0.0) throw ValueError("apportion: all weights zero with positive total");

  std::vector<double> remainders(weights.size());
  long assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<long>(std::floor(exact));
    remainders[i] = exact - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (long i = 0; assigned < total; ++i, ++assigned) out[order[static_cast<std::size_t>(i)]] += 1;
  return out;
}

std::string bucket_of(ResourceType src, ResourceType tgt) {
  return std::string(1, resource_letter(src)) + "2" + resource_letter(tgt);
}

std::string bucket_of(const LanguageSpec& src, const LanguageSpec& tgt) {
  return bucket_of(src.resource_type, tgt.resource_type);
}

std::string direction_label(const std::string& src, const std::string& tgt) {
  return src + "->" + tgt;
}

std::vector<TranslationPair> build_dataset(const ParallelCorpus& corpus,
                                           const DatasetOptions& options, std::uint64_t seed) {
  const auto& langs = corpus.languages;
  int n = static_cast<int>(langs.size());
  if (n < 2) throw ConfigError("dataset: need at least two languages");

  // A zero-budget language contributes nothing in proportional mode, on
  // either side of a pair.
  auto eligible = [&](const CorpusLanguage& l) {
    return options.mode == SamplingMode::Uniform || l.spec.corpus_size > 0;
  };
  std::vector<std::pair<std::string, std::string>> directions;
  if (options.directions) {
    if (options.directions->empty()) throw ConfigError("dataset: empty direction set");
    for (const auto& [s, t] : *options.directions) {
      if (s == t) throw ConfigError("dataset: copy direction " + s + "->" + t + " not allowed");
      corpus.lang_index(s);
      corpus.lang_index(t);
      directions.emplace_back(s, t);
    }
  } else {
    for (const CorpusLanguage& s : langs)
      for (const CorpusLanguage& t : langs)
        if (s.spec.code != t.spec.code && eligible(s) && eligible(t))
          directions.emplace_back(s.spec.code, t.spec.code);
  }

  // Direction quotas.
  std::map<std::string, long> quota;  // key "src->tgt"
  if (options.mode == SamplingMode::Uniform) {
    if (options.uniform_quota < 1) throw ConfigError("dataset: uniform quota must be >= 1");
    for (const auto& [s, t] : directions) quota[direction_label(s, t)] = options.uniform_quota;
  } else {
    // Each language's corpus_size is its budget as the target side, split
    // across incoming sources by largest remainder.
    for (const CorpusLanguage& tgt : langs) {
      std::vector<std::pair<std::string, std::string>> incoming;
      for (const auto& d : directions)
        if (d.second == tgt.spec.code) incoming.push_back(d);
      if (incoming.empty()) continue;
      std::vector<double> w(incoming.size(), 1.0);
      std::vector<long> alloc = apportion_largest_remainder(tgt.spec.corpus_size, w);
      for (std::size_t i = 0; i < incoming.size(); ++i)
        quota[direction_label(incoming[i].first, incoming[i].second)] = alloc[i];
    }
  }

  // Available sets for the requested split.
  int lo = options.split == Split::Train ? 0 : corpus.train_sets;
  int hi = options.split == Split::Train ? corpus.train_sets : static_cast<int>(corpus.sentences.size());
  long avail = hi - lo;
  for (const auto& [dir, q] : quota)
    if (q > avail)
      throw ConfigError("dataset: direction " + dir + " requests " + std::to_string(q) +
                        " pairs but only " + std::to_string(avail) + " sets are available");

  Rng root = Rng(seed).split("dataset");
  std::vector<TranslationPair> pairs;
  for (const auto& [src, tgt] : directions) {
    long q = quota[direction_label(src, tgt)];
    if (q == 0) continue;
    Rng dr = root.split(direction_label(src, tgt));
    std::vector<int> ids(static_cast<std::size_t>(avail));
    std::iota(ids.begin(), ids.end(), lo);
    dr.shuffle(ids);
    int si = corpus.lang_index(src), ti = corpus.lang_index(tgt);
    for (long i = 0; i < q; ++i) {
      int set_id = ids[static_cast<std::size_t>(i)];
      pairs.push_back({src, tgt, corpus.sentences[static_cast<std::size_t>(set_id)][static_cast<std::size_t>(si)],
                       corpus.sentences[static_cast<std::size_t>(set_id)][static_cast<std::size_t>(ti)], set_id});
    }
  }
  return pairs;
}

void write_corpus(const ParallelCorpus& corpus, const std::string& corpus_path,
                  const std::string& manifest_path, std::uint64_t seed,
                  const std::string& config_hash) {
  std::ofstream cf(corpus_path, std::ios::binary);
  if (!cf) throw IoError("cannot write " + corpus_path);
  for (std::size_t set = 0; set < corpus.sentences.size(); ++set) {
    for (std::size_t li = 0; li < corpus.languages.size(); ++li) {
      cf << set << " " << corpus.languages[li].spec.code;
      for (int t : corpus.sentences[set][li]) cf << " " << t;
      cf << "\n";
    }
  }
  cf.close();

  json langs = json::array();
  for (const CorpusLanguage& cl : corpus.languages) {
    langs.push_back({{"code", cl.spec.code},
                     {"resource_type", to_string(cl.spec.resource_type)},
                     {"corpus_size", cl.spec.corpus_size},
                     {"rank", cl.spec.rank},
                     {"family", cl.family},
                     {"reorder", cl.reorder}});
  }
  json directions = json::array();
  for (const CorpusLanguage& s : corpus.languages)
    for (const CorpusLanguage& t : corpus.languages)
      if (s.spec.code != t.spec.code)
        directions.push_back({{"src", s.spec.code},
                              {"tgt", t.spec.code},
                              {"bucket", bucket_of(s.spec, t.spec)}});
  json manifest = {{"format_version", 1},
                   {"config_hash", config_hash},
                   {"seed", seed},
                   {"languages", langs},
                   {"vocab_size", corpus.vocab_size},
                   {"pad_id", corpus.pad_id},
                   {"eos_id", corpus.eos_id},
                   {"lang_tokens", corpus.lang_token},
                   {"num_sets", corpus.sentences.size()},
                   {"train_sets", corpus.train_sets},
                   {"directions", directions}};
  std::ofstream mf(manifest_path, std::ios::binary);
  if (!mf) throw IoError("cannot write " + manifest_path);
  mf << manifest.dump(2) << "\n";
}

ParallelCorpus read_corpus(const std::string& corpus_path, const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw MissingError("corpus manifest not found: " + manifest_path + " (run gen-data first)");
  json manifest = json::parse(mf);

  ParallelCorpus corpus;
  for (const json& jl : manifest.at("languages")) {
    CorpusLanguage cl;
    cl.spec.code = jl.at("code").get<std::string>();
    cl.spec.resource_type = resource_from_string(jl.at("resource_type").get<std::string>());
    cl.spec.corpus_size = jl.at("corpus_size").get<long>();
    cl.spec.rank = jl.at("rank").get<int>();
    cl.family = jl.at("family").get<std::string>();
    cl.reorder = jl.at("reorder").get<bool>();
    corpus.languages.push_back(std::move(cl));
  }
  corpus.vocab_size = manifest.at("vocab_size").get<int>();
  corpus.pad_id = manifest.at("pad_id").get<int>();
  corpus.eos_id = manifest.at("eos_id").get<int>();
  for (auto& [code, id] : manifest.at("lang_tokens").items())
    corpus.lang_token[code] = id.get<int>();
  corpus.train_sets = manifest.at("train_sets").get<int>();
  std::size_t num_sets = manifest.at("num_sets").get<std::size_t>();
  corpus.sentences.assign(num_sets,
                          std::vector<std::vector<int>>(corpus.languages.size()));

  std::ifstream cf(corpus_path);
  if (!cf) throw MissingError("corpus file not found: " + corpus_path + " (run gen-data first)");
  std::string line;
  while (std::getline(cf, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::size_t set_id;
    std::string code;
    is >> set_id >> code;
    if (set_id >= num_sets) throw IoError("corpus file: set id out of range");
    std::vector<int> toks;
    int t;
    while (is >> t) toks.push_back(t);
    corpus.sentences[set_id][static_cast<std::size_t>(corpus.lang_index(code))] = std::move(toks);
  }
  return corpus;
}

}  // namespace lslab

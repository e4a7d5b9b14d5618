// SPDX-License-Identifier: Apache-2.0
#include "lslab/config.hpp"

#include <cstdio>
#include <fstream>

#include "lslab/errors.hpp"

namespace lslab {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
}

namespace {

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for \"" + key + "\"");
  }
}

CorpusSpec parse_corpus(const json& j) {
  reject_unknown_keys(j, {"languages", "num_sets", "meaning_vocab", "min_len", "max_len",
                          "family_share", "use_affix", "holdout_fraction"},
                      "corpus");
  CorpusSpec spec;
  if (!j.contains("languages")) throw ConfigError("corpus: missing languages");
  for (const json& jl : j.at("languages")) {
    reject_unknown_keys(jl, {"code", "resource_type", "corpus_size", "rank", "family", "reorder"},
                        "corpus.languages[]");
    CorpusLanguage cl;
    cl.spec.code = jl.at("code").get<std::string>();
    cl.spec.resource_type = resource_from_string(jl.at("resource_type").get<std::string>());
    cl.spec.corpus_size = jl.at("corpus_size").get<long>();
    cl.spec.rank = get_or<int>(jl, "rank", 1);
    cl.family = get_or<std::string>(jl, "family", "");
    cl.reorder = get_or<bool>(jl, "reorder", false);
    spec.languages.push_back(std::move(cl));
  }
  spec.num_sets = get_or<int>(j, "num_sets", 0);
  spec.meaning_vocab = get_or<int>(j, "meaning_vocab", 30);
  spec.min_len = get_or<int>(j, "min_len", 4);
  spec.max_len = get_or<int>(j, "max_len", 8);
  spec.family_share = get_or<double>(j, "family_share", 0.8);
  spec.use_affix = get_or<bool>(j, "use_affix", true);
  spec.holdout_fraction = get_or<double>(j, "holdout_fraction", 0.2);
  spec.validate();
  return spec;
}

ModelConfig parse_model(const json& j) {
  reject_unknown_keys(j, {"num_layers", "d_model", "num_heads", "d_ffn", "max_len"}, "model");
  ModelConfig cfg;
  cfg.num_layers = get_or<int>(j, "num_layers", 4);
  cfg.d_model = get_or<int>(j, "d_model", 64);
  cfg.num_heads = get_or<int>(j, "num_heads", 4);
  cfg.d_ffn = get_or<int>(j, "d_ffn", 128);
  cfg.max_len = get_or<int>(j, "max_len", 32);
  cfg.vocab_size = 1;  // placeholder until the corpus fixes it
  cfg.validate();
  return cfg;
}

PruneSchedule parse_gps(const json& j, int total_epochs) {
  reject_unknown_keys(j, {"target_ratio", "start_epoch", "duration_epochs", "scope", "grouping"},
                      "gps");
  PruneSchedule s;
  s.target_ratio = get_or<double>(j, "target_ratio", 0.9);
  s.start_epoch = get_or<int>(j, "start_epoch", 2);
  s.ramp_epochs = get_or<int>(j, "duration_epochs", 8);
  s.total_epochs = total_epochs;
  s.validate();
  return s;
}

PhaseConfig parse_phase(const json& j, const std::string& name, const PhaseConfig& defaults) {
  reject_unknown_keys(j, {"epochs", "learning_rate", "batch_size", "sampling", "direction_quota",
                          "eval_interval", "eval_buckets", "eval_pairs", "val_pairs", "rank_policy",
                          "placement", "strategy", "gps", "rank", "ratio", "start_epoch",
                          "duration_epochs"},
                      "phases." + name);
  PhaseConfig p = defaults;
  p.epochs = get_or<int>(j, "epochs", p.epochs);
  p.learning_rate = get_or<double>(j, "learning_rate", p.learning_rate);
  p.batch_size = get_or<int>(j, "batch_size", p.batch_size);
  if (j.contains("sampling")) p.sampling = sampling_from_string(j.at("sampling").get<std::string>());
  p.direction_quota = get_or<long>(j, "direction_quota", p.direction_quota);
  p.eval_interval = get_or<int>(j, "eval_interval", p.eval_interval);
  p.eval_buckets = get_or<std::vector<std::string>>(j, "eval_buckets", p.eval_buckets);
  p.eval_pairs = get_or<int>(j, "eval_pairs", p.eval_pairs);
  p.val_pairs = get_or<int>(j, "val_pairs", p.val_pairs);
  p.rank_policy = get_or<std::string>(j, "rank_policy", p.rank_policy);
  if (j.contains("placement"))
    p.placement = placement_from_string(j.at("placement").get<std::string>());
  p.strategy = get_or<std::string>(j, "strategy", p.strategy);
  if (j.contains("gps")) {
    const json& g = j.at("gps");
    p.gps = parse_gps(g, p.epochs);
    if (g.contains("scope")) {
      p.gps_scope.clear();
      for (const json& t : g.at("scope")) p.gps_scope.insert(resource_from_string(t.get<std::string>()));
    }
    if (g.contains("grouping")) p.gps_grouping = grouping_from_string(g.at("grouping").get<std::string>());
  }
  p.rank = get_or<int>(j, "rank", p.rank);
  p.estimate_ratio = get_or<double>(j, "ratio", p.estimate_ratio);
  p.estimate_start_epoch = get_or<int>(j, "start_epoch", p.estimate_start_epoch);
  p.estimate_ramp_epochs = get_or<int>(j, "duration_epochs", p.estimate_ramp_epochs);
  if (p.epochs < 0) throw ConfigError("phases." + name + ": negative epochs");
  if (p.batch_size < 1) throw ConfigError("phases." + name + ": batch_size must be >= 1");
  if (!(p.learning_rate >= 0.0)) throw ConfigError("phases." + name + ": bad learning rate");
  return p;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  reject_unknown_keys(doc, {"format_version", "output_dir", "corpus", "model", "phases"}, "config");
  ExperimentConfig cfg;
  cfg.format_version = get_or<int>(doc, "format_version", 1);
  if (cfg.format_version != 1)
    throw ConfigError("unsupported format_version " + std::to_string(cfg.format_version));
  cfg.output_dir = get_or<std::string>(doc, "output_dir", "out");
  if (!doc.contains("corpus")) throw ConfigError("config: missing corpus section");
  cfg.corpus = parse_corpus(doc.at("corpus"));
  cfg.model = parse_model(doc.contains("model") ? doc.at("model") : json::object());

  PhaseConfig train_defaults;
  // Protocol defaults: 15 epochs; full fine-tuning at 1e-4, adapter phases
  // at 3e-3.
  PhaseConfig seed_defaults = train_defaults;
  seed_defaults.sampling = SamplingMode::Proportional;
  seed_defaults.learning_rate = 2e-3;
  seed_defaults.epochs = 8;
  PhaseConfig ft_defaults = train_defaults;
  ft_defaults.learning_rate = 1e-4;
  PhaseConfig wl_defaults = train_defaults;
  wl_defaults.learning_rate = 3e-3;
  PhaseConfig lslo_defaults = train_defaults;
  lslo_defaults.learning_rate = 3e-3;
  PhaseConfig est_defaults = train_defaults;
  est_defaults.learning_rate = 3e-3;

  json phases = doc.contains("phases") ? doc.at("phases") : json::object();
  reject_unknown_keys(phases, {"seed_pretrain", "ft_all", "weight_learn", "lslo_finetune",
                               "estimate"},
                      "phases");
  auto section = [&phases](const char* key) {
    return phases.contains(key) ? phases.at(key) : json::object();
  };
  cfg.seed_pretrain = parse_phase(section("seed_pretrain"), "seed_pretrain", seed_defaults);
  cfg.ft_all = parse_phase(section("ft_all"), "ft_all", ft_defaults);
  cfg.weight_learn = parse_phase(section("weight_learn"), "weight_learn", wl_defaults);
  cfg.lslo_finetune = parse_phase(section("lslo_finetune"), "lslo_finetune", lslo_defaults);
  cfg.estimate = parse_phase(section("estimate"), "estimate", est_defaults);

  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(doc.dump())));
  cfg.hash = buf;
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingError("config file not found: " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace lslab

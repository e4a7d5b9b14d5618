// SPDX-License-Identifier: Apache-2.0
#include "lslab/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lslab/checkpoint.hpp"
#include "lslab/errors.hpp"

namespace lslab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void refuse_existing(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw ConfigError("output " + path + " already exists (use --force to overwrite)");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << content;
}

std::string header_comment(const ExperimentConfig& cfg, std::uint64_t seed) {
  return "config=" + cfg.hash + " seed=" + std::to_string(seed) + " format=1";
}

std::string corpus_path(const std::string& out) { return out + "/corpus.txt"; }
std::string manifest_path(const std::string& out) { return out + "/manifest.json"; }
std::string seed_ckpt_path(const std::string& out) { return out + "/seed/checkpoint.bin"; }

ParallelCorpus load_corpus_or_hint(const std::string& out) {
  return read_corpus(corpus_path(out), manifest_path(out));
}

Checkpoint load_seed_or_hint(const std::string& out) {
  std::string path = seed_ckpt_path(out);
  if (!fs::exists(path))
    throw MissingError("seed checkpoint not found: " + path + " (run seed-pretrain first)");
  return load_checkpoint(path);
}

ModelConfig model_config_for(const ExperimentConfig& cfg, const ParallelCorpus& corpus) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = corpus.vocab_size;
  int need = corpus.max_sequence_len();
  if (mc.max_len < need)
    throw ConfigError("model.max_len=" + std::to_string(mc.max_len) +
                      " too small for corpus sequences (need " + std::to_string(need) + ")");
  mc.validate();
  return mc;
}

std::vector<TranslationPair> phase_dataset(const ParallelCorpus& corpus, const PhaseConfig& phase,
                                           std::uint64_t seed) {
  DatasetOptions opts;
  opts.mode = phase.sampling;
  opts.uniform_quota = phase.direction_quota;
  opts.split = Split::Train;
  return build_dataset(corpus, opts, Rng(seed).split("trainset").next_u64());
}

std::vector<TranslationPair> holdout_dataset(const ParallelCorpus& corpus, long per_direction,
                                             std::uint64_t seed, const char* label) {
  DatasetOptions opts;
  opts.mode = SamplingMode::Uniform;
  opts.uniform_quota = per_direction;
  opts.split = Split::Holdout;
  return build_dataset(corpus, opts, Rng(seed).split(label).next_u64());
}

TrainParams make_train_params(const PhaseConfig& phase, Phase kind, std::uint64_t seed) {
  TrainParams tp;
  tp.phase = kind;
  tp.epochs = phase.epochs;
  tp.learning_rate = phase.learning_rate;
  tp.batch_size = phase.batch_size;
  tp.seed = Rng(seed).split(to_string(kind)).next_u64();
  tp.eval_interval = phase.eval_interval;
  tp.eval_buckets = phase.eval_buckets;
  tp.eval_pairs_per_direction = phase.eval_pairs;
  return tp;
}

std::string strategy_suffix(const std::string& strategy) {
  if (strategy == "target") return "+TGT";
  if (strategy == "source") return "+SRC";
  return "+WL";  // strategy file produced by weight learning
}

IndexStrategy resolve_strategy(const std::string& strategy, int num_layers) {
  if (strategy == "target") return IndexStrategy::all_target(num_layers);
  if (strategy == "source") {
    IndexStrategy s;
    s.encoder.assign(static_cast<std::size_t>(num_layers), IndexChoice::SourceIndexed);
    s.decoder.assign(static_cast<std::size_t>(num_layers), IndexChoice::SourceIndexed);
    return s;
  }
  std::ifstream f(strategy);
  if (!f) throw MissingError("strategy file not found: " + strategy + " (run weight-learn first)");
  json j = json::parse(f);
  auto side = [](const json& arr) {
    std::vector<IndexChoice> out;
    for (const json& c : arr)
      out.push_back(c.get<std::string>() == "source" ? IndexChoice::SourceIndexed
                                                     : IndexChoice::TargetIndexed);
    return out;
  };
  IndexStrategy s;
  s.encoder = side(j.at("encoder"));
  s.decoder = side(j.at("decoder"));
  if (static_cast<int>(s.encoder.size()) != num_layers ||
      static_cast<int>(s.decoder.size()) != num_layers)
    throw ConfigError("strategy file covers " + std::to_string(s.encoder.size()) + "+" +
                      std::to_string(s.decoder.size()) + " layers, model has " +
                      std::to_string(num_layers) + " per side");
  return s;
}

std::string fmt_ratio(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", p);
  return buf;
}

void write_eval_outputs(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir,
                        const BaseModel& model, const AdapterStack* stack,
                        const ParallelCorpus& corpus, const PhaseConfig& phase,
                        const std::string& label, long params, int beam,
                        std::vector<std::string>& written) {
  auto test_pairs = holdout_dataset(corpus, phase.eval_pairs, seed, "testset");
  DecodeOptions d;
  d.beam_width = beam;
  std::vector<LanguageSpec> langs;
  for (const CorpusLanguage& cl : corpus.languages) langs.push_back(cl.spec);
  BleuReport rep = bucket_report(evaluate(model, stack, corpus, test_pairs, d), langs);
  write_file(dir + "/eval.json", report_json(rep, label, params));
  write_file(dir + "/report.csv", report_csv(rep, label, params, header_comment(cfg, seed)));
  written.push_back(dir + "/eval.json");
  written.push_back(dir + "/report.csv");
}

}  // namespace

std::string method_label(const RankPolicy& policy, const std::string& suffix,
                         const std::optional<PruneSchedule>& gps) {
  std::string label = policy.label() + suffix;
  if (gps && gps->target_ratio > 0.0) label += "+GPS(" + fmt_ratio(gps->target_ratio) + ")";
  return label;
}

std::vector<std::string> run_gen_data(const ExperimentConfig& cfg, std::uint64_t seed,
                                      const std::string& out, bool force) {
  ensure_dir(out);
  refuse_existing(manifest_path(out), force);
  ParallelCorpus corpus = generate_corpus(cfg.corpus, Rng(seed).split("corpus").next_u64());
  write_corpus(corpus, corpus_path(out), manifest_path(out), seed, cfg.hash);
  return {corpus_path(out), manifest_path(out)};
}

std::vector<std::string> run_seed_pretrain(const ExperimentConfig& cfg, std::uint64_t seed,
                                           const std::string& out, bool force) {
  ParallelCorpus corpus = load_corpus_or_hint(out);
  std::string dir = out + "/seed";
  ensure_dir(dir);
  refuse_existing(dir + "/checkpoint.bin", force);

  ModelConfig mc = model_config_for(cfg, corpus);
  BaseModel model = build_model(mc, Rng(seed).split("model_init").next_u64());

  auto train_pairs = phase_dataset(corpus, cfg.seed_pretrain, seed);
  auto val_pairs = holdout_dataset(corpus, cfg.seed_pretrain.val_pairs, seed, "valset");
  TrainParams tp = make_train_params(cfg.seed_pretrain, Phase::SeedPretrain, seed);
  RunLog log = train(tp, model, nullptr, train_pairs, val_pairs, corpus);
  log.config_hash = cfg.hash;

  save_checkpoint(dir + "/checkpoint.bin", model, nullptr);
  write_file(dir + "/runlog.jsonl", log.to_jsonl());
  return {dir + "/checkpoint.bin", dir + "/runlog.jsonl"};
}

std::vector<std::string> run_weight_learn(const ExperimentConfig& cfg, std::uint64_t seed,
                                          const std::string& out, bool force) {
  ParallelCorpus corpus = load_corpus_or_hint(out);
  Checkpoint seed_ckpt = load_seed_or_hint(out);
  std::string dir = out + "/wl";
  ensure_dir(dir);
  refuse_existing(dir + "/strategy.json", force);

  BaseModel& model = seed_ckpt.model;
  const PhaseConfig& phase = cfg.weight_learn;
  std::vector<LanguageSpec> langs;
  for (const CorpusLanguage& cl : corpus.languages) langs.push_back(cl.spec);

  Rng stack_rng = Rng(seed).split("wl_stack");
  AdapterStack stack = build_adapter_stack(enumerate_sites(model.config()), model, langs,
                                           RankPolicy::uniform(phase.rank), Placement::All,
                                           stack_rng);
  stack.enable_weight_learning(model.config().num_layers);

  auto train_pairs = phase_dataset(corpus, phase, seed);
  auto val_pairs = holdout_dataset(corpus, phase.val_pairs, seed, "valset");
  TrainParams tp = make_train_params(phase, Phase::WeightLearn, seed);
  RunLog log = train(tp, model, &stack, train_pairs, val_pairs, corpus);
  log.config_hash = cfg.hash;
  log.base_checkpoint = file_hash(seed_ckpt_path(out));

  // Snapshot the learned mixture and the resolved strategy.
  IndexStrategy strategy = resolve_index_strategy(stack.weight_learning());
  stack.set_strategy(strategy);

  std::ostringstream weights;
  weights << "# " << header_comment(cfg, seed) << "\n";
  weights << "side,layer,w_src,w_tgt\n";
  auto emit = [&](Side side, std::size_t n) {
    for (std::size_t l = 0; l < n; ++l) {
      auto [ws, wt] = stack.weight_learning().weights(side, static_cast<int>(l));
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g", ws, wt);
      weights << to_string(side) << "," << l << "," << buf << "\n";
    }
  };
  emit(Side::Encoder, stack.weight_learning().encoder_u.size());
  emit(Side::Decoder, stack.weight_learning().decoder_u.size());

  json strat = {{"origin", "weight_learning"},
                {"config_hash", cfg.hash},
                {"seed", seed},
                {"encoder", json::array()},
                {"decoder", json::array()}};
  for (IndexChoice c : strategy.encoder)
    strat["encoder"].push_back(c == IndexChoice::SourceIndexed ? "source" : "target");
  for (IndexChoice c : strategy.decoder)
    strat["decoder"].push_back(c == IndexChoice::SourceIndexed ? "source" : "target");

  save_checkpoint(dir + "/checkpoint.bin", model, &stack);
  write_file(dir + "/runlog.jsonl", log.to_jsonl());
  write_file(dir + "/weights.csv", weights.str());
  write_file(dir + "/strategy.json", strat.dump(2) + "\n");
  return {dir + "/checkpoint.bin", dir + "/runlog.jsonl", dir + "/weights.csv",
          dir + "/strategy.json"};
}

std::vector<std::string> run_train_phase(const ExperimentConfig& cfg, Phase phase_kind,
                                         std::uint64_t seed, const std::string& out, bool force,
                                         int beam) {
  if (phase_kind != Phase::FtAll && phase_kind != Phase::LsloFinetune)
    throw ConfigError("train subcommand supports phases ft_all and lslo_finetune");
  ParallelCorpus corpus = load_corpus_or_hint(out);
  Checkpoint seed_ckpt = load_seed_or_hint(out);
  BaseModel& model = seed_ckpt.model;

  std::string dir = out + "/" + to_string(phase_kind);
  ensure_dir(dir);
  refuse_existing(dir + "/checkpoint.bin", force);

  std::vector<std::string> written;
  if (phase_kind == Phase::FtAll) {
    const PhaseConfig& phase = cfg.ft_all;
    auto train_pairs = phase_dataset(corpus, phase, seed);
    auto val_pairs = holdout_dataset(corpus, phase.val_pairs, seed, "valset");
    TrainParams tp = make_train_params(phase, Phase::FtAll, seed);
    RunLog log = train(tp, model, nullptr, train_pairs, val_pairs, corpus);
    log.config_hash = cfg.hash;
    log.base_checkpoint = file_hash(seed_ckpt_path(out));
    save_checkpoint(dir + "/checkpoint.bin", model, nullptr);
    write_file(dir + "/runlog.jsonl", log.to_jsonl());
    written = {dir + "/checkpoint.bin", dir + "/runlog.jsonl"};
    long base_params = 0;
    for (auto& [name, t] : model.named_params()) base_params += static_cast<long>(t.numel());
    write_eval_outputs(cfg, seed, dir, model, nullptr, corpus, phase, "Ft-all", base_params, beam,
                       written);
    return written;
  }

  const PhaseConfig& phase = cfg.lslo_finetune;
  RankPolicy policy = RankPolicy::parse(phase.rank_policy);
  std::vector<LanguageSpec> langs;
  for (const CorpusLanguage& cl : corpus.languages) langs.push_back(cl.spec);

  Rng stack_rng = Rng(seed).split("lslo_stack");
  AdapterStack stack = build_adapter_stack(enumerate_sites(model.config()), model, langs, policy,
                                           phase.placement, stack_rng);
  stack.set_strategy(resolve_strategy(phase.strategy, model.config().num_layers));

  auto train_pairs = phase_dataset(corpus, phase, seed);
  auto val_pairs = holdout_dataset(corpus, phase.val_pairs, seed, "valset");
  TrainParams tp = make_train_params(phase, Phase::LsloFinetune, seed);
  tp.gps = phase.gps;
  tp.grouping = phase.gps_grouping;
  tp.prune_scope = phase.gps_scope;

  RunLog log = train(tp, model, &stack, train_pairs, val_pairs, corpus);
  log.config_hash = cfg.hash;
  log.base_checkpoint = file_hash(seed_ckpt_path(out));

  save_checkpoint(dir + "/checkpoint.bin", model, &stack);
  write_file(dir + "/runlog.jsonl", log.to_jsonl());
  write_file(dir + "/prune_log.csv", prune_log_csv(log.prune_log, header_comment(cfg, seed)));
  written = {dir + "/checkpoint.bin", dir + "/runlog.jsonl", dir + "/prune_log.csv"};

  std::string label = method_label(policy, strategy_suffix(phase.strategy), phase.gps);
  write_eval_outputs(cfg, seed, dir, model, &stack, corpus, phase, label,
                     stack.trainable_param_count(), beam, written);
  return written;
}

std::vector<std::string> run_estimate_cmd(const ExperimentConfig& cfg, Grouping mode,
                                          std::uint64_t seed, const std::string& out, bool force) {
  if (mode == Grouping::PerMatrix)
    throw ConfigError("estimate: mode must be layerwise or langspec");
  ParallelCorpus corpus = load_corpus_or_hint(out);
  Checkpoint seed_ckpt = load_seed_or_hint(out);
  BaseModel& model = seed_ckpt.model;

  std::string dir =
      out + (mode == Grouping::LayerwiseCrossLanguage ? "/estimate_layerwise" : "/estimate_langspec");
  ensure_dir(dir);
  refuse_existing(dir + "/scores.csv", force);

  const PhaseConfig& phase = cfg.estimate;
  EstimateParams ep;
  ep.grouping = mode;
  ep.rank = phase.rank;
  ep.schedule.target_ratio = phase.estimate_ratio;
  ep.schedule.start_epoch = phase.estimate_start_epoch;
  ep.schedule.ramp_epochs = phase.estimate_ramp_epochs;
  ep.schedule.total_epochs = phase.epochs;
  ep.schedule.validate();
  ep.train = make_train_params(phase, Phase::EstimateLayerwise, seed);

  auto train_pairs = phase_dataset(corpus, phase, seed);
  auto val_pairs = holdout_dataset(corpus, phase.val_pairs, seed, "valset");
  EstimateResult res = run_estimate(ep, model, corpus, train_pairs, val_pairs);
  res.log.config_hash = cfg.hash;
  res.log.base_checkpoint = file_hash(seed_ckpt_path(out));

  std::string hc = header_comment(cfg, seed);
  write_file(dir + "/scores.csv", res.table.to_csv(hc));
  write_file(dir + "/heatmap.csv", res.table.heatmap_csv(hc));
  write_file(dir + "/correlation.csv", correlation_csv(res.correlations, hc));
  write_file(dir + "/runlog.jsonl", res.log.to_jsonl());
  return {dir + "/scores.csv", dir + "/heatmap.csv", dir + "/correlation.csv",
          dir + "/runlog.jsonl"};
}

std::vector<std::string> run_evaluate(const ExperimentConfig& cfg, const std::string& ckpt_path,
                                      const std::string& label, std::uint64_t seed,
                                      const std::string& out, bool force, int beam) {
  ParallelCorpus corpus = load_corpus_or_hint(out);
  if (!fs::exists(ckpt_path)) throw MissingError("checkpoint not found: " + ckpt_path);
  Checkpoint ck = load_checkpoint(ckpt_path);

  std::string dir = out + "/eval_" + label;
  ensure_dir(dir);
  refuse_existing(dir + "/eval.json", force);

  long params = 0;
  const AdapterStack* stack = ck.stack ? &*ck.stack : nullptr;
  if (stack) {
    params = ck.stack->trainable_param_count();
  } else {
    for (auto& [name, t] : ck.model.named_params()) params += static_cast<long>(t.numel());
  }
  std::vector<std::string> written;
  write_eval_outputs(cfg, seed, dir, ck.model, stack, corpus, cfg.ft_all, label, params, beam,
                     written);
  return written;
}

std::vector<std::string> run_report(const std::vector<std::string>& eval_jsons,
                                    const std::string& out, bool force) {
  if (eval_jsons.empty()) throw ConfigError("report: no eval files given");
  ensure_dir(out);
  std::string path = out + "/report.csv";
  refuse_existing(path, force);

  struct Row {
    std::string method;
    long params;
    std::map<std::string, double> buckets;
    double avg;
  };
  std::vector<Row> rows;
  std::vector<std::string> bucket_order;
  for (const std::string& file : eval_jsons) {
    std::ifstream f(file);
    if (!f) throw MissingError("eval file not found: " + file);
    json j = json::parse(f);
    Row r;
    r.method = j.at("method").get<std::string>();
    r.params = j.at("params").get<long>();
    for (auto& [bucket, score] : j.at("bucket_means").items()) {
      r.buckets[bucket] = score.get<double>();
      if (std::find(bucket_order.begin(), bucket_order.end(), bucket) == bucket_order.end())
        bucket_order.push_back(bucket);
    }
    r.avg = j.at("avg_buckets").get<double>();
    rows.push_back(std::move(r));
  }
  // Stable column order: resource-ordered buckets.
  std::sort(bucket_order.begin(), bucket_order.end(), [](const std::string& a, const std::string& b) {
    auto rank = [](char c) { return std::string("HMLV").find(c); };
    if (rank(a[0]) != rank(b[0])) return rank(a[0]) < rank(b[0]);
    return rank(a[2]) < rank(b[2]);
  });

  std::ostringstream os;
  os << "method,params";
  for (const std::string& b : bucket_order) os << "," << b;
  os << ",AVG\n";
  for (const Row& r : rows) {
    os << r.method << "," << r.params;
    for (const std::string& b : bucket_order) {
      auto it = r.buckets.find(b);
      char buf[64];
      if (it != r.buckets.end()) {
        std::snprintf(buf, sizeof(buf), "%.6f", it->second);
        os << "," << buf;
      } else {
        os << ",";
      }
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", r.avg);
    os << "," << buf << "\n";
  }
  write_file(path, os.str());
  return {path};
}

}  // namespace lslab

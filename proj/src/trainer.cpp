// SPDX-License-Identifier: Apache-2.0
#include "lslab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lslab/errors.hpp"

namespace lslab {

using nlohmann::json;

const char* to_string(Phase p) {
  switch (p) {
    case Phase::SeedPretrain: return "seed_pretrain";
    case Phase::FtAll: return "ft_all";
    case Phase::WeightLearn: return "weight_learn";
    case Phase::LsloFinetune: return "lslo_finetune";
    case Phase::EstimateLayerwise: return "estimate_layerwise";
    case Phase::EstimateLangspec: return "estimate_langspec";
  }
  return "?";
}

Phase phase_from_string(const std::string& s) {
  if (s == "seed_pretrain") return Phase::SeedPretrain;
  if (s == "ft_all") return Phase::FtAll;
  if (s == "weight_learn") return Phase::WeightLearn;
  if (s == "lslo_finetune") return Phase::LsloFinetune;
  if (s == "estimate_layerwise") return Phase::EstimateLayerwise;
  if (s == "estimate_langspec") return Phase::EstimateLangspec;
  throw ConfigError("unknown phase: " + s);
}

bool phase_freezes_base(Phase p) { return p != Phase::SeedPretrain && p != Phase::FtAll; }

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::add_param(const std::string& name, const Tensor& t) {
  if (!t.requires_grad())
    throw ValueError("optimizer: parameter \"" + name + "\" does not require grad");
  Slot s;
  s.name = name;
  s.t = t;
  s.m.assign(t.numel(), 0.0);
  s.v.assign(t.numel(), 0.0);
  params_.push_back(std::move(s));
}

long Adam::registered_elements() const {
  long n = 0;
  for (const Slot& s : params_) n += static_cast<long>(s.t.numel());
  return n;
}

void Adam::zero_grad() {
  for (Slot& s : params_) {
    auto g = s.t.grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (Slot& s : params_) {
    auto x = s.t.data();
    auto g = s.t.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = s.m[i] / bc1;
      double vhat = s.v[i] / bc2;
      x[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

EncodedPair encode_pair(const ParallelCorpus& corpus, const TranslationPair& pair) {
  EncodedPair e;
  e.src_ids.reserve(pair.src.size() + 2);
  e.src_ids.push_back(corpus.lang_token.at(pair.src_lang));
  e.src_ids.insert(e.src_ids.end(), pair.src.begin(), pair.src.end());
  e.src_ids.push_back(corpus.eos_id);
  e.tgt_in.reserve(pair.tgt.size() + 1);
  e.tgt_in.push_back(corpus.lang_token.at(pair.tgt_lang));
  e.tgt_in.insert(e.tgt_in.end(), pair.tgt.begin(), pair.tgt.end());
  e.tgt_out = pair.tgt;
  e.tgt_out.push_back(corpus.eos_id);
  return e;
}

namespace {

struct Batch {
  std::string src_lang, tgt_lang;
  std::vector<const TranslationPair*> pairs;
};

// Single-direction batches, direction chunks interleaved round-robin after a
// seeded shuffle of each direction's pairs.
std::vector<Batch> make_batches(const std::vector<TranslationPair>& pairs, int batch_size,
                                Rng& rng) {
  std::map<std::string, std::vector<const TranslationPair*>> by_dir;
  for (const TranslationPair& p : pairs)
    by_dir[direction_label(p.src_lang, p.tgt_lang)].push_back(&p);

  std::vector<std::vector<Batch>> chunked;
  for (auto& [dir, list] : by_dir) {
    Rng dr = rng.split(dir);
    dr.shuffle(list);
    std::vector<Batch> chunks;
    for (std::size_t i = 0; i < list.size(); i += static_cast<std::size_t>(batch_size)) {
      Batch b;
      b.src_lang = list[i]->src_lang;
      b.tgt_lang = list[i]->tgt_lang;
      for (std::size_t j = i; j < std::min(list.size(), i + static_cast<std::size_t>(batch_size)); ++j)
        b.pairs.push_back(list[j]);
      chunks.push_back(std::move(b));
    }
    chunked.push_back(std::move(chunks));
  }

  std::vector<Batch> out;
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (auto& chunks : chunked) {
      if (round < chunks.size()) {
        out.push_back(std::move(chunks[round]));
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

long planned_steps_per_epoch(const std::vector<TranslationPair>& pairs, int batch_size) {
  std::map<std::string, long> counts;
  for (const TranslationPair& p : pairs) ++counts[direction_label(p.src_lang, p.tgt_lang)];
  long steps = 0;
  for (const auto& [dir, n] : counts) steps += (n + batch_size - 1) / batch_size;
  return steps;
}

// Mean cross-entropy of a batch: token-count-weighted mean over the batch's
// pairs, so the value equals the mean over all non-pad target positions.
Tensor batch_loss(Tape& tape, const BaseModel& model, AdapterStack* stack,
                  const ParallelCorpus& corpus, const Batch& batch, RoutingMode mode) {
  std::vector<Tensor> pair_losses;
  std::vector<double> weights;
  long total_tokens = 0;
  for (const TranslationPair* p : batch.pairs) {
    EncodedPair e = encode_pair(corpus, *p);
    RoutingContext ctx{p->src_lang, p->tgt_lang, mode};
    Tensor logits = forward_logits(tape, model, stack, ctx, e.src_ids, e.tgt_in);
    pair_losses.push_back(tape.cross_entropy(logits, e.tgt_out, corpus.pad_id));
    weights.push_back(static_cast<double>(e.tgt_out.size()));
    total_tokens += static_cast<long>(e.tgt_out.size());
  }
  Tensor acc;
  for (std::size_t i = 0; i < pair_losses.size(); ++i) {
    Tensor w = tape.scale(pair_losses[i], weights[i] / static_cast<double>(total_tokens));
    acc = acc.defined() ? tape.add(acc, w) : w;
  }
  return acc;
}

double validation_loss(const BaseModel& model, AdapterStack* stack, const ParallelCorpus& corpus,
                       const std::vector<TranslationPair>& val_pairs, RoutingMode mode) {
  if (val_pairs.empty()) return 0.0;
  double total = 0.0;
  long tokens = 0;
  for (const TranslationPair& p : val_pairs) {
    Tape tape;
    EncodedPair e = encode_pair(corpus, p);
    RoutingContext ctx{p.src_lang, p.tgt_lang, mode};
    Tensor logits = forward_logits(tape, model, stack, ctx, e.src_ids, e.tgt_in);
    Tensor loss = tape.cross_entropy(logits, e.tgt_out, corpus.pad_id);
    total += loss.item() * static_cast<double>(e.tgt_out.size());
    tokens += static_cast<long>(e.tgt_out.size());
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

double wl_pair_error(const AdapterStack& stack) {
  if (!stack.has_weight_learning()) return 0.0;
  const WeightLearningState& wl = stack.weight_learning();
  double worst = 0.0;
  auto scan = [&](Side side, std::size_t n) {
    for (std::size_t l = 0; l < n; ++l) {
      auto [ws, wt] = wl.weights(side, static_cast<int>(l));
      worst = std::max(worst, std::abs(ws + wt - 1.0));
      if (ws < 0.0 || wt < 0.0) worst = std::max(worst, 1.0);
    }
  };
  scan(Side::Encoder, wl.encoder_u.size());
  scan(Side::Decoder, wl.decoder_u.size());
  return worst;
}

}  // namespace

RunLog train(const TrainParams& params, BaseModel& model, AdapterStack* stack,
             const std::vector<TranslationPair>& train_pairs,
             const std::vector<TranslationPair>& val_pairs, const ParallelCorpus& corpus) {
  if (train_pairs.empty()) throw ConfigError("train: empty dataset");
  if (params.epochs < 0) throw ConfigError("train: negative epoch count");
  if (params.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  bool freeze = phase_freezes_base(params.phase);
  if (freeze && !stack) throw ConfigError("train: adapter phase requires an adapter stack");
  if (freeze) model.freeze();

  RoutingMode mode = RoutingMode::Off;
  if (stack) mode = params.phase == Phase::WeightLearn ? RoutingMode::Mixture : RoutingMode::Hard;

  Adam opt;
  if (!freeze)
    for (auto& [name, t] : model.named_params()) opt.add_param(name, t);
  if (stack && freeze)
    for (auto& [name, t] : stack->named_params()) opt.add_param(name, t);

  // Pruning plan (epoch-start recomputation).
  std::vector<PruneGroup> plan;
  if (params.gps) {
    if (!stack) throw ConfigError("train: pruning requires an adapter stack");
    params.gps->validate();
    if (params.gps->total_epochs != params.epochs)
      throw ConfigError("train: prune schedule T must equal the run's epoch count");
    plan = build_prune_plan(*stack, params.grouping, params.prune_scope);
  }

  RunLog log;
  log.phase = to_string(params.phase);
  log.seed = params.seed;
  log.planned_steps = static_cast<long>(params.epochs) *
                      planned_steps_per_epoch(train_pairs, params.batch_size);

  Rng root(params.seed);
  for (int epoch = 1; epoch <= params.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    if (params.gps) {
      auto rows = prune_at_epoch(plan, *params.gps, epoch);
      log.prune_log.insert(log.prune_log.end(), rows.begin(), rows.end());
      if (stack) stack->apply_masks();
    }

    Rng er = root.split("epoch" + std::to_string(epoch));
    std::vector<Batch> batches = make_batches(train_pairs, params.batch_size, er);

    double loss_sum = 0.0;
    long batch_count = 0;
    double wl_err = 0.0;
    for (const Batch& batch : batches) {
      opt.zero_grad();
      Tape tape;
      Tensor loss;
      try {
        loss = batch_loss(tape, model, stack, corpus, batch, mode);
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(opt.steps_taken() + 1) + ", direction " +
                           direction_label(batch.src_lang, batch.tgt_lang) + ")");
      }
      opt.step(params.learning_rate);
      if (stack) stack->apply_masks();
      if (stack && stack->has_weight_learning()) wl_err = std::max(wl_err, wl_pair_error(*stack));
      loss_sum += loss.item();
      ++batch_count;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = batch_count;
    rec.train_loss = batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0;
    rec.val_loss = validation_loss(model, stack, corpus, val_pairs, mode);
    rec.wl_pair_sum_error = wl_err;

    if (params.eval_interval > 0 && epoch % params.eval_interval == 0 &&
        !params.eval_buckets.empty()) {
      // Snapshots decode with hard routing; for a weight-learning run that
      // means the currently resolved strategy.
      if (stack && stack->has_weight_learning())
        stack->set_strategy(resolve_index_strategy(stack->weight_learning()));
      // Snapshot BLEU on the requested buckets only, over validation pairs.
      std::vector<TranslationPair> subset;
      std::map<std::string, int> per_dir;
      for (const TranslationPair& p : val_pairs) {
        std::string bucket = bucket_of(corpus.spec(p.src_lang), corpus.spec(p.tgt_lang));
        if (std::find(params.eval_buckets.begin(), params.eval_buckets.end(), bucket) ==
            params.eval_buckets.end())
          continue;
        if (per_dir[direction_label(p.src_lang, p.tgt_lang)]++ >= params.eval_pairs_per_direction)
          continue;
        subset.push_back(p);
      }
      auto scores = evaluate(model, stack, corpus, subset, params.eval_decode);
      std::map<std::string, std::pair<double, int>> agg;
      for (const DirectionScore& d : scores) {
        std::string bucket = bucket_of(corpus.spec(d.src_lang), corpus.spec(d.tgt_lang));
        agg[bucket].first += d.score;
        agg[bucket].second += 1;
      }
      for (const auto& [bucket, sc] : agg) rec.bucket_bleu[bucket] = sc.first / sc.second;
    }

    auto t1 = std::chrono::steady_clock::now();
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log.epochs.push_back(std::move(rec));
    if (params.on_epoch_end) params.on_epoch_end(epoch);
  }

  log.executed_steps = opt.steps_taken();
  if (log.executed_steps != log.planned_steps)
    throw NumericError("train: executed steps " + std::to_string(log.executed_steps) +
                       " != planned " + std::to_string(log.planned_steps));
  return log;
}

std::string RunLog::to_jsonl(bool with_timing) const {
  std::ostringstream os;
  json header = {{"record", "header"},      {"phase", phase},
                 {"seed", seed},            {"config_hash", config_hash},
                 {"base_checkpoint", base_checkpoint},
                 {"planned_steps", planned_steps}, {"executed_steps", executed_steps}};
  os << header.dump() << "\n";
  for (const EpochRecord& e : epochs) {
    json j = {{"record", "epoch"},       {"epoch", e.epoch},
              {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
              {"steps", e.steps},        {"wl_pair_sum_error", e.wl_pair_sum_error}};
    if (!e.bucket_bleu.empty()) j["bucket_bleu"] = e.bucket_bleu;
    if (with_timing) j["wall_ms"] = e.wall_ms;
    os << j.dump() << "\n";
  }
  for (const PruneLogRow& r : prune_log) {
    json j = {{"record", "prune"}, {"epoch", r.epoch},   {"group", r.group_id},
              {"ratio", r.target_ratio}, {"zeroed", r.zeroed}, {"total", r.total}};
    os << j.dump() << "\n";
  }
  return os.str();
}

namespace {

struct Beam {
  std::vector<int> tokens;  // decoder input so far (starts with lang token)
  double log_prob = 0.0;
  bool done = false;
};

std::vector<double> next_log_probs(const BaseModel& model, const AdapterStack* stack,
                                   const RoutingContext& ctx, const std::vector<int>& src_ids,
                                   const std::vector<int>& tgt_in) {
  Tape tape;
  Tensor logits = forward_logits(tape, model, stack, ctx, src_ids, tgt_in);
  int v = logits.dim(1);
  int last = logits.dim(0) - 1;
  std::vector<double> row(static_cast<std::size_t>(v));
  double mx = -1e300;
  for (int j = 0; j < v; ++j) {
    row[static_cast<std::size_t>(j)] = logits.at(last, j);
    mx = std::max(mx, row[static_cast<std::size_t>(j)]);
  }
  double z = 0.0;
  for (double x : row) z += std::exp(x - mx);
  double lse = mx + std::log(z);
  for (double& x : row) x -= lse;
  return row;
}

}  // namespace

std::vector<int> decode(const BaseModel& model, const AdapterStack* stack,
                        const ParallelCorpus& corpus, const std::string& src_lang,
                        const std::string& tgt_lang, const std::vector<int>& src_sentence,
                        const DecodeOptions& opts) {
  if (opts.beam_width < 1) throw ValueError("decode: beam width must be >= 1");
  std::vector<int> src_ids;
  src_ids.push_back(corpus.lang_token.at(src_lang));
  src_ids.insert(src_ids.end(), src_sentence.begin(), src_sentence.end());
  src_ids.push_back(corpus.eos_id);
  RoutingContext ctx{src_lang, tgt_lang, RoutingMode::Hard};
  if (!stack) ctx.mode = RoutingMode::Off;
  int max_steps = model.config().max_len - 1;

  std::vector<Beam> beams{{{corpus.lang_token.at(tgt_lang)}, 0.0, false}};
  for (int step = 0; step < max_steps; ++step) {
    bool all_done = true;
    std::vector<Beam> candidates;
    for (const Beam& b : beams) {
      if (b.done) {
        candidates.push_back(b);
        continue;
      }
      all_done = false;
      std::vector<double> lp = next_log_probs(model, stack, ctx, src_ids, b.tokens);
      // Rank token ids by log-prob, ties to the smaller id.
      std::vector<int> order(lp.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
        return lp[static_cast<std::size_t>(a)] > lp[static_cast<std::size_t>(c)];
      });
      int take = std::min<int>(opts.beam_width, static_cast<int>(order.size()));
      for (int i = 0; i < take; ++i) {
        Beam nb = b;
        int tok = order[static_cast<std::size_t>(i)];
        nb.log_prob += lp[static_cast<std::size_t>(tok)];
        if (tok == corpus.eos_id) {
          nb.done = true;
        } else {
          nb.tokens.push_back(tok);
          if (static_cast<int>(nb.tokens.size()) >= model.config().max_len) nb.done = true;
        }
        candidates.push_back(std::move(nb));
      }
    }
    if (all_done) break;
    // Keep the top beams by length-normalized score; deterministic tie-break
    // on the token sequence itself.
    auto norm = [&](const Beam& b) {
      double len = static_cast<double>(std::max<std::size_t>(1, b.tokens.size() - 1));
      return b.log_prob / std::pow(len, opts.length_norm_exponent);
    };
    std::stable_sort(candidates.begin(), candidates.end(), [&](const Beam& a, const Beam& b) {
      double na = norm(a), nb = norm(b);
      if (na != nb) return na > nb;
      return a.tokens < b.tokens;
    });
    if (static_cast<int>(candidates.size()) > opts.beam_width)
      candidates.resize(static_cast<std::size_t>(opts.beam_width));
    beams = std::move(candidates);
    bool done = true;
    for (const Beam& b : beams) done = done && b.done;
    if (done) break;
  }

  const Beam* best = &beams.front();
  return {best->tokens.begin() + 1, best->tokens.end()};
}

std::vector<DirectionScore> evaluate(const BaseModel& model, const AdapterStack* stack,
                                     const ParallelCorpus& corpus,
                                     const std::vector<TranslationPair>& pairs,
                                     const DecodeOptions& opts) {
  std::map<std::string, std::pair<std::vector<std::vector<int>>, std::vector<std::vector<int>>>>
      by_dir;
  std::map<std::string, std::pair<std::string, std::string>> dir_langs;
  for (const TranslationPair& p : pairs) {
    std::string dir = direction_label(p.src_lang, p.tgt_lang);
    dir_langs[dir] = {p.src_lang, p.tgt_lang};
    std::vector<int> hyp = decode(model, stack, corpus, p.src_lang, p.tgt_lang, p.src, opts);
    by_dir[dir].first.push_back(std::move(hyp));
    by_dir[dir].second.push_back(p.tgt);
  }
  std::vector<DirectionScore> out;
  for (const auto& [dir, cr] : by_dir) {
    DirectionScore d;
    d.src_lang = dir_langs[dir].first;
    d.tgt_lang = dir_langs[dir].second;
    d.num_pairs = static_cast<int>(cr.first.size());
    d.score = bleu(cr.first, cr.second);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace lslab

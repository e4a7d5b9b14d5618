// SPDX-License-Identifier: Apache-2.0
#include "lslab/model.hpp"

#include <cmath>

#include "lslab/errors.hpp"

namespace lslab {

const char* to_string(Side s) { return s == Side::Encoder ? "enc" : "dec"; }

const char* to_string(SiteKind k) {
  switch (k) {
    case SiteKind::Q: return "q";
    case SiteKind::K: return "k";
    case SiteKind::V: return "v";
    case SiteKind::CQ: return "c-q";
    case SiteKind::CK: return "c-k";
    case SiteKind::CV: return "c-v";
    case SiteKind::Fc1: return "fc1";
    case SiteKind::Fc2: return "fc2";
  }
  return "?";
}

Side side_from_string(const std::string& s) {
  if (s == "enc" || s == "encoder") return Side::Encoder;
  if (s == "dec" || s == "decoder") return Side::Decoder;
  throw ValueError("unknown side: " + s);
}

SiteKind kind_from_string(const std::string& s) {
  if (s == "q") return SiteKind::Q;
  if (s == "k") return SiteKind::K;
  if (s == "v") return SiteKind::V;
  if (s == "c-q") return SiteKind::CQ;
  if (s == "c-k") return SiteKind::CK;
  if (s == "c-v") return SiteKind::CV;
  if (s == "fc1") return SiteKind::Fc1;
  if (s == "fc2") return SiteKind::Fc2;
  throw ValueError("unknown site kind: " + s);
}

bool kind_is_attention(SiteKind k) { return k != SiteKind::Fc1 && k != SiteKind::Fc2; }

std::string LsloSite::name() const {
  return std::string(to_string(side)) + ".l" + std::to_string(layer) + "." + to_string(kind);
}

void ModelConfig::validate() const {
  if (num_layers <= 0) throw ConfigError("num_layers must be positive");
  if (d_model <= 0) throw ConfigError("d_model must be positive");
  if (num_heads <= 0) throw ConfigError("num_heads must be positive");
  if (d_model % num_heads != 0)
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  if (d_ffn <= 0) throw ConfigError("d_ffn must be positive");
  if (vocab_size <= 0) throw ConfigError("vocab_size must be positive");
  if (max_len <= 0) throw ConfigError("max_len must be positive");
}

std::vector<LsloSite> enumerate_sites(int encoder_layers, int decoder_layers) {
  if (encoder_layers < 0 || decoder_layers < 0) throw ValueError("layer counts must be >= 0");
  std::vector<LsloSite> sites;
  static constexpr SiteKind enc_kinds[] = {SiteKind::Q, SiteKind::K, SiteKind::V, SiteKind::Fc1,
                                           SiteKind::Fc2};
  static constexpr SiteKind dec_kinds[] = {SiteKind::Q,   SiteKind::K,   SiteKind::V,
                                           SiteKind::CQ,  SiteKind::CK,  SiteKind::CV,
                                           SiteKind::Fc1, SiteKind::Fc2};
  for (int l = 0; l < encoder_layers; ++l)
    for (SiteKind k : enc_kinds) sites.push_back({Side::Encoder, l, k});
  for (int l = 0; l < decoder_layers; ++l)
    for (SiteKind k : dec_kinds) sites.push_back({Side::Decoder, l, k});
  return sites;
}

std::vector<LsloSite> enumerate_sites(const ModelConfig& config) {
  return enumerate_sites(config.num_layers, config.num_layers);
}

Tensor& BaseModel::site_weight(const LsloSite& site) {
  return const_cast<Tensor&>(static_cast<const BaseModel*>(this)->site_weight(site));
}

const Tensor& BaseModel::site_weight(const LsloSite& site) const {
  if (site.layer < 0 || site.layer >= config_.num_layers)
    throw ValueError("site layer out of range: " + site.name());
  if (site.side == Side::Encoder) {
    const EncoderLayerWeights& l = encoder[static_cast<std::size_t>(site.layer)];
    switch (site.kind) {
      case SiteKind::Q: return l.self_attn.wq;
      case SiteKind::K: return l.self_attn.wk;
      case SiteKind::V: return l.self_attn.wv;
      case SiteKind::Fc1: return l.w_fc1;
      case SiteKind::Fc2: return l.w_fc2;
      default: throw ValueError("cross-attention site on encoder side: " + site.name());
    }
  }
  const DecoderLayerWeights& l = decoder[static_cast<std::size_t>(site.layer)];
  switch (site.kind) {
    case SiteKind::Q: return l.self_attn.wq;
    case SiteKind::K: return l.self_attn.wk;
    case SiteKind::V: return l.self_attn.wv;
    case SiteKind::CQ: return l.cross_attn.wq;
    case SiteKind::CK: return l.cross_attn.wk;
    case SiteKind::CV: return l.cross_attn.wv;
    case SiteKind::Fc1: return l.w_fc1;
    case SiteKind::Fc2: return l.w_fc2;
  }
  throw ValueError("unreachable site kind");
}

std::pair<int, int> BaseModel::site_dims(const LsloSite& site) const {
  const Tensor& w = site_weight(site);
  return {w.dim(0), w.dim(1)};
}

std::vector<std::pair<std::string, Tensor>> BaseModel::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_emb", tok_emb);
  out.emplace_back("pos_emb_src", pos_emb_src);
  out.emplace_back("pos_emb_tgt", pos_emb_tgt);
  auto attn = [&out](const std::string& prefix, const AttentionWeights& a) {
    out.emplace_back(prefix + ".wq", a.wq);
    out.emplace_back(prefix + ".bq", a.bq);
    out.emplace_back(prefix + ".wk", a.wk);
    out.emplace_back(prefix + ".bk", a.bk);
    out.emplace_back(prefix + ".wv", a.wv);
    out.emplace_back(prefix + ".bv", a.bv);
    out.emplace_back(prefix + ".wo", a.wo);
    out.emplace_back(prefix + ".bo", a.bo);
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    std::string p = "enc.l" + std::to_string(i);
    const EncoderLayerWeights& l = encoder[i];
    out.emplace_back(p + ".ln1_g", l.ln1_g);
    out.emplace_back(p + ".ln1_b", l.ln1_b);
    attn(p + ".self", l.self_attn);
    out.emplace_back(p + ".ln2_g", l.ln2_g);
    out.emplace_back(p + ".ln2_b", l.ln2_b);
    out.emplace_back(p + ".fc1", l.w_fc1);
    out.emplace_back(p + ".fc1_b", l.b_fc1);
    out.emplace_back(p + ".fc2", l.w_fc2);
    out.emplace_back(p + ".fc2_b", l.b_fc2);
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    std::string p = "dec.l" + std::to_string(i);
    const DecoderLayerWeights& l = decoder[i];
    out.emplace_back(p + ".ln1_g", l.ln1_g);
    out.emplace_back(p + ".ln1_b", l.ln1_b);
    attn(p + ".self", l.self_attn);
    out.emplace_back(p + ".ln2_g", l.ln2_g);
    out.emplace_back(p + ".ln2_b", l.ln2_b);
    attn(p + ".cross", l.cross_attn);
    out.emplace_back(p + ".ln3_g", l.ln3_g);
    out.emplace_back(p + ".ln3_b", l.ln3_b);
    out.emplace_back(p + ".fc1", l.w_fc1);
    out.emplace_back(p + ".fc1_b", l.b_fc1);
    out.emplace_back(p + ".fc2", l.w_fc2);
    out.emplace_back(p + ".fc2_b", l.b_fc2);
  }
  out.emplace_back("ln_enc_g", ln_enc_g);
  out.emplace_back("ln_enc_b", ln_enc_b);
  out.emplace_back("ln_dec_g", ln_dec_g);
  out.emplace_back("ln_dec_b", ln_dec_b);
  out.emplace_back("w_out", w_out);
  out.emplace_back("b_out", b_out);
  return out;
}

void BaseModel::freeze() {
  frozen_ = true;
  for (auto& [name, t] : named_params()) t.node()->requires_grad = false;
}

namespace {

Tensor init_matrix(std::vector<int> shape, Rng& rng, double fan_in) {
  return Tensor::randn(std::move(shape), rng, 1.0 / std::sqrt(fan_in), true);
}

AttentionWeights init_attention(int d, Rng& rng) {
  AttentionWeights a;
  a.wq = init_matrix({d, d}, rng, d);
  a.bq = Tensor::zeros({d}, true);
  a.wk = init_matrix({d, d}, rng, d);
  a.bk = Tensor::zeros({d}, true);
  a.wv = init_matrix({d, d}, rng, d);
  a.bv = Tensor::zeros({d}, true);
  a.wo = init_matrix({d, d}, rng, d);
  a.bo = Tensor::zeros({d}, true);
  return a;
}

}  // namespace

BaseModel build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  BaseModel m;
  m.config_ = config;
  Rng root(seed);
  int d = config.d_model;

  Rng r_emb = root.split("tok_emb");
  m.tok_emb = init_matrix({config.vocab_size, d}, r_emb, d);
  Rng r_pos_s = root.split("pos_emb_src");
  m.pos_emb_src = init_matrix({config.max_len, d}, r_pos_s, d);
  Rng r_pos_t = root.split("pos_emb_tgt");
  m.pos_emb_tgt = init_matrix({config.max_len, d}, r_pos_t, d);

  for (int l = 0; l < config.num_layers; ++l) {
    Rng rl = root.split("enc" + std::to_string(l));
    EncoderLayerWeights lw;
    lw.ln1_g = Tensor::full({d}, 1.0, true);
    lw.ln1_b = Tensor::zeros({d}, true);
    lw.ln2_g = Tensor::full({d}, 1.0, true);
    lw.ln2_b = Tensor::zeros({d}, true);
    lw.self_attn = init_attention(d, rl);
    lw.w_fc1 = init_matrix({config.d_ffn, d}, rl, d);
    lw.b_fc1 = Tensor::zeros({config.d_ffn}, true);
    lw.w_fc2 = init_matrix({d, config.d_ffn}, rl, config.d_ffn);
    lw.b_fc2 = Tensor::zeros({d}, true);
    m.encoder.push_back(std::move(lw));
  }
  for (int l = 0; l < config.num_layers; ++l) {
    Rng rl = root.split("dec" + std::to_string(l));
    DecoderLayerWeights lw;
    lw.ln1_g = Tensor::full({d}, 1.0, true);
    lw.ln1_b = Tensor::zeros({d}, true);
    lw.ln2_g = Tensor::full({d}, 1.0, true);
    lw.ln2_b = Tensor::zeros({d}, true);
    lw.ln3_g = Tensor::full({d}, 1.0, true);
    lw.ln3_b = Tensor::zeros({d}, true);
    lw.self_attn = init_attention(d, rl);
    lw.cross_attn = init_attention(d, rl);
    lw.w_fc1 = init_matrix({config.d_ffn, d}, rl, d);
    lw.b_fc1 = Tensor::zeros({config.d_ffn}, true);
    lw.w_fc2 = init_matrix({d, config.d_ffn}, rl, config.d_ffn);
    lw.b_fc2 = Tensor::zeros({d}, true);
    m.decoder.push_back(std::move(lw));
  }
  Rng r_out = root.split("out");
  m.ln_enc_g = Tensor::full({d}, 1.0, true);
  m.ln_enc_b = Tensor::zeros({d}, true);
  m.ln_dec_g = Tensor::full({d}, 1.0, true);
  m.ln_dec_b = Tensor::zeros({d}, true);
  m.w_out = init_matrix({config.vocab_size, d}, r_out, d);
  m.b_out = Tensor::zeros({config.vocab_size}, true);
  return m;
}

// ---------------------------------------------------------------------------
// forward

namespace {

struct ForwardCtx {
  Tape& tape;
  const BaseModel& model;
  const SiteDelta* delta;
};

// Projection through a site weight plus the adapter contribution, if any.
Tensor project(ForwardCtx& ctx, const Tensor& x, const Tensor& w, const Tensor& b,
               const LsloSite& site) {
  Tensor y = ctx.tape.add_row(ctx.tape.matmul_nt(x, w), b);
  if (ctx.delta) {
    Tensor extra = ctx.delta->apply(ctx.tape, site, x);
    if (extra.defined()) y = ctx.tape.add(y, extra);
  }
  return y;
}

Tensor multi_head_attention(ForwardCtx& ctx, const Tensor& q_in, const Tensor& kv_in,
                            const AttentionWeights& w, Side side, int layer, bool cross,
                            const Tensor* add_mask) {
  const ModelConfig& cfg = ctx.model.config();
  int heads = cfg.num_heads;
  int dh = cfg.d_model / heads;
  SiteKind qk = cross ? SiteKind::CQ : SiteKind::Q;
  SiteKind kk = cross ? SiteKind::CK : SiteKind::K;
  SiteKind vk = cross ? SiteKind::CV : SiteKind::V;
  Tensor q = project(ctx, q_in, w.wq, w.bq, {side, layer, qk});
  Tensor k = project(ctx, kv_in, w.wk, w.bk, {side, layer, kk});
  Tensor v = project(ctx, kv_in, w.wv, w.bv, {side, layer, vk});
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = ctx.tape.slice_cols(q, h * dh, dh);
    Tensor kh = ctx.tape.slice_cols(k, h * dh, dh);
    Tensor vh = ctx.tape.slice_cols(v, h * dh, dh);
    Tensor scores = ctx.tape.scale(ctx.tape.matmul_nt(qh, kh), inv_sqrt);
    Tensor probs = ctx.tape.softmax_rows(scores, add_mask);
    head_outs.push_back(ctx.tape.matmul(probs, vh));
  }
  Tensor ctx_out = ctx.tape.concat_cols(head_outs);
  return ctx.tape.add_row(ctx.tape.matmul_nt(ctx_out, w.wo), w.bo);
}

Tensor feed_forward(ForwardCtx& ctx, const Tensor& x, const Tensor& w1, const Tensor& b1,
                    const Tensor& w2, const Tensor& b2, Side side, int layer) {
  Tensor h = ctx.tape.relu(project(ctx, x, w1, b1, {side, layer, SiteKind::Fc1}));
  return project(ctx, h, w2, b2, {side, layer, SiteKind::Fc2});
}

Tensor causal_mask(int n) {
  Tensor m = Tensor::zeros({n, n});
  auto d = m.data();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d[static_cast<std::size_t>(i) * n + j] = -1e30;
  return m;
}

}  // namespace

Tensor model_forward(Tape& tape, const BaseModel& model, const SiteDelta* delta,
                     std::span<const int> src_ids, std::span<const int> tgt_in_ids) {
  const ModelConfig& cfg = model.config();
  int slen = static_cast<int>(src_ids.size());
  int tlen = static_cast<int>(tgt_in_ids.size());
  if (slen == 0 || tlen == 0) throw ValueError("forward: empty input sequence");
  if (slen > cfg.max_len || tlen > cfg.max_len)
    throw ValueError("forward: sequence longer than max_len");
  for (int id : src_ids)
    if (id < 0 || id >= cfg.vocab_size) throw ValueError("forward: source token out of range");
  for (int id : tgt_in_ids)
    if (id < 0 || id >= cfg.vocab_size) throw ValueError("forward: target token out of range");

  ForwardCtx ctx{tape, model, delta};

  // Encoder
  Tensor x = tape.add(tape.gather_rows(model.tok_emb, {src_ids.begin(), src_ids.end()}),
                      tape.slice_rows(model.pos_emb_src, 0, slen));
  for (int l = 0; l < cfg.num_layers; ++l) {
    const EncoderLayerWeights& lw = model.encoder[static_cast<std::size_t>(l)];
    Tensor h = tape.layer_norm_rows(x, lw.ln1_g, lw.ln1_b);
    x = tape.add(x, multi_head_attention(ctx, h, h, lw.self_attn, Side::Encoder, l, false, nullptr));
    Tensor h2 = tape.layer_norm_rows(x, lw.ln2_g, lw.ln2_b);
    x = tape.add(x, feed_forward(ctx, h2, lw.w_fc1, lw.b_fc1, lw.w_fc2, lw.b_fc2, Side::Encoder, l));
  }
  Tensor memory = tape.layer_norm_rows(x, model.ln_enc_g, model.ln_enc_b);

  // Decoder
  Tensor cmask = causal_mask(tlen);
  Tensor y = tape.add(tape.gather_rows(model.tok_emb, {tgt_in_ids.begin(), tgt_in_ids.end()}),
                      tape.slice_rows(model.pos_emb_tgt, 0, tlen));
  for (int l = 0; l < cfg.num_layers; ++l) {
    const DecoderLayerWeights& lw = model.decoder[static_cast<std::size_t>(l)];
    Tensor h = tape.layer_norm_rows(y, lw.ln1_g, lw.ln1_b);
    y = tape.add(y, multi_head_attention(ctx, h, h, lw.self_attn, Side::Decoder, l, false, &cmask));
    Tensor h2 = tape.layer_norm_rows(y, lw.ln2_g, lw.ln2_b);
    y = tape.add(y, multi_head_attention(ctx, h2, memory, lw.cross_attn, Side::Decoder, l, true,
                                         nullptr));
    Tensor h3 = tape.layer_norm_rows(y, lw.ln3_g, lw.ln3_b);
    y = tape.add(y, feed_forward(ctx, h3, lw.w_fc1, lw.b_fc1, lw.w_fc2, lw.b_fc2, Side::Decoder, l));
  }
  y = tape.layer_norm_rows(y, model.ln_dec_g, model.ln_dec_b);
  return tape.add_row(tape.matmul_nt(y, model.w_out), model.b_out);
}

}  // namespace lslab

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lslab/tensor.hpp"

namespace lslab {

enum class Side { Encoder, Decoder };

// Weight-matrix kinds eligible for adapters: self-attention projections,
// decoder cross-attention projections, and the two MLP matrices.
enum class SiteKind { Q, K, V, CQ, CK, CV, Fc1, Fc2 };

const char* to_string(Side s);
const char* to_string(SiteKind k);
Side side_from_string(const std::string& s);
SiteKind kind_from_string(const std::string& s);
bool kind_is_attention(SiteKind k);

struct LsloSite {
  Side side;
  int layer;
  SiteKind kind;

  std::string name() const;  // e.g. "dec.l2.c-q"
  auto operator<=>(const LsloSite&) const = default;
};

struct ModelConfig {
  int num_layers = 4;  // per side
  int d_model = 64;
  int num_heads = 4;
  int d_ffn = 128;
  int vocab_size = 0;
  int max_len = 32;

  void validate() const;
};

// Deterministic site order: encoder layers 0..L-1 x {q,k,v,fc1,fc2}, then
// decoder layers 0..L-1 x {q,k,v,c-q,c-k,c-v,fc1,fc2}.
std::vector<LsloSite> enumerate_sites(int encoder_layers, int decoder_layers);
std::vector<LsloSite> enumerate_sites(const ModelConfig& config);

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // w: [d_model, d_model] (out x in)
};

struct EncoderLayerWeights {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionWeights self_attn;
  Tensor w_fc1, b_fc1, w_fc2, b_fc2;  // fc1: [d_ffn, d_model], fc2: [d_model, d_ffn]
};

struct DecoderLayerWeights {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
  AttentionWeights self_attn, cross_attn;
  Tensor w_fc1, b_fc1, w_fc2, b_fc2;
};

// Pre-norm encoder-decoder transformer with learned positional embeddings.
// Every adapter-eligible weight matrix is addressable through its LsloSite.
class BaseModel {
 public:
  BaseModel() = default;

  const ModelConfig& config() const { return config_; }

  Tensor& site_weight(const LsloSite& site);
  const Tensor& site_weight(const LsloSite& site) const;
  // (d, k) of the site's weight matrix, i.e. (rows out, cols in).
  std::pair<int, int> site_dims(const LsloSite& site) const;

  // Deterministic (name, tensor) enumeration; also the checkpoint manifest
  // order.
  std::vector<std::pair<std::string, Tensor>> named_params() const;

  void freeze();
  bool frozen() const { return frozen_; }

  std::vector<EncoderLayerWeights> encoder;
  std::vector<DecoderLayerWeights> decoder;
  Tensor tok_emb;        // [vocab, d_model]
  Tensor pos_emb_src;    // [max_len, d_model]
  Tensor pos_emb_tgt;    // [max_len, d_model]
  Tensor ln_enc_g, ln_enc_b, ln_dec_g, ln_dec_b;
  Tensor w_out, b_out;   // [vocab, d_model], [vocab]

  friend BaseModel build_model(const ModelConfig& config, std::uint64_t seed);

 private:
  ModelConfig config_;
  bool frozen_ = false;
};

BaseModel build_model(const ModelConfig& config, std::uint64_t seed);

// Extra per-site contribution hook; implemented by the adapter stack.
class SiteDelta {
 public:
  virtual ~SiteDelta() = default;
  // Returns the additive adapter output for x at this site, or an undefined
  // tensor when the site carries no adapter.
  virtual Tensor apply(Tape& tape, const LsloSite& site, const Tensor& x) const = 0;
};

// Full forward pass. src_ids feed the encoder, tgt_in_ids the decoder
// (language token already prepended by the caller); returns logits
// [len(tgt_in_ids), vocab]. Decoder self-attention is causal; cross-attention
// masks nothing (inputs are unpadded sequences).
Tensor model_forward(Tape& tape, const BaseModel& model, const SiteDelta* delta,
                     std::span<const int> src_ids, std::span<const int> tgt_in_ids);

}  // namespace lslab

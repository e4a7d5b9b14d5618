// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lslab/model.hpp"
#include "lslab/rng.hpp"
#include "lslab/tensor.hpp"

namespace lslab {

enum class ResourceType { High, Medium, Low, VeryLow };

char resource_letter(ResourceType t);  // H, M, L, V
const char* to_string(ResourceType t);
ResourceType resource_from_string(const std::string& s);

struct LanguageSpec {
  std::string code;
  ResourceType resource_type = ResourceType::High;
  long corpus_size = 0;  // sentence-pair budget
  int rank = 1;
};

// Maps resource types to adapter ranks. Parsed from the row-label syntax
// "rH;rM;rV" (three types) or "rH;rM;rL;rV" (four types).
struct RankPolicy {
  std::map<ResourceType, int> rank_of;

  static RankPolicy parse(const std::string& text);
  static RankPolicy uniform(int rank);
  int rank_for(const LanguageSpec& lang) const;  // ConfigError if type missing
  std::string label() const;                     // "2;2;8"
};

enum class Placement { All, OnlyFc, OnlyAttn };
Placement placement_from_string(const std::string& s);
const char* to_string(Placement p);

// Per-language low-rank factors at one site. A is Gaussian at construction,
// B starts exactly zero, and B is always read through its binary mask.
struct LangFactors {
  Tensor A;     // [r, k]
  Tensor B;     // [d, r]
  Tensor mask;  // [d, r], non-trainable, {0,1}
};

struct LsloAdapter {
  LsloSite site;
  int d = 0, k = 0;
  std::vector<std::string> lang_order;
  std::map<std::string, LangFactors> langs;

  // B_lang (x) mask applied to A_lang x. RoutingError for unknown languages.
  Tensor forward(Tape& tape, const Tensor& x, const std::string& lang) const;
  const LangFactors& factors(const std::string& lang) const;
};

enum class IndexChoice { SourceIndexed, TargetIndexed };

// One choice per (side, layer): which language selects the adapter.
struct IndexStrategy {
  std::vector<IndexChoice> encoder;
  std::vector<IndexChoice> decoder;

  static IndexStrategy all_target(int num_layers);
  IndexChoice choice(Side side, int layer) const;
};

// Raw per-layer mixing logits; the derived (w_src, w_tgt) pair is the softmax
// of each, shared by all sites in that layer.
struct WeightLearningState {
  std::vector<Tensor> encoder_u;  // each [2], trainable
  std::vector<Tensor> decoder_u;

  static WeightLearningState init(int num_layers);
  const Tensor& u(Side side, int layer) const;
  // (w_src, w_tgt) evaluated off-tape.
  std::pair<double, double> weights(Side side, int layer) const;
};

// Per layer: source-indexed iff w_src > w_tgt; exact ties go target-indexed.
IndexStrategy resolve_index_strategy(const WeightLearningState& wl);

enum class RoutingMode { Off, Hard, Mixture };

struct RoutingContext {
  std::string src_lang;
  std::string tgt_lang;
  RoutingMode mode = RoutingMode::Hard;
};

// Adapters for the selected sites plus routing state. Exclusively owned by
// one training run.
class AdapterStack : public SiteDelta {
 public:
  AdapterStack() = default;

  Tensor apply(Tape& tape, const LsloSite& site, const Tensor& x) const override;

  void set_routing(const RoutingContext& ctx) { routing_ = ctx; }
  const RoutingContext& routing() const { return routing_; }

  void set_strategy(IndexStrategy s) { strategy_ = std::move(s); }
  const IndexStrategy& strategy() const { return strategy_; }

  bool has_weight_learning() const { return wl_.has_value(); }
  WeightLearningState& weight_learning() { return *wl_; }
  const WeightLearningState& weight_learning() const { return *wl_; }
  void enable_weight_learning(int num_layers) { wl_ = WeightLearningState::init(num_layers); }

  std::vector<LsloAdapter>& adapters() { return adapters_; }
  const std::vector<LsloAdapter>& adapters() const { return adapters_; }
  const LsloAdapter* find(const LsloSite& site) const;
  LsloAdapter* find(const LsloSite& site);

  const std::vector<LanguageSpec>& languages() const { return langs_; }
  const LanguageSpec& language(const std::string& code) const;

  // Trainable tensors in deterministic order: factors site-by-site and
  // language-by-language, then weight-learning logits. Masks are excluded.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  // Factor elements only (masked entries still count); equals the formula
  // sum over sites and languages of d*r + r*k.
  long trainable_param_count() const;

  // Re-zeroes masked B entries in place (post-optimizer-step enforcement).
  void apply_masks();

  friend AdapterStack build_adapter_stack(const std::vector<LsloSite>& sites,
                                          const BaseModel& model,
                                          const std::vector<LanguageSpec>& langs,
                                          const RankPolicy& policy, Placement placement,
                                          Rng& rng);

 private:
  std::vector<LsloAdapter> adapters_;
  std::map<LsloSite, std::size_t> index_;
  std::vector<LanguageSpec> langs_;
  IndexStrategy strategy_;
  std::optional<WeightLearningState> wl_;
  RoutingContext routing_;
};

// Creates adapters at the placement-selected subset of sites. Factor A is
// Gaussian with stddev 1/sqrt(r); B is exactly zero; masks start all-ones.
AdapterStack build_adapter_stack(const std::vector<LsloSite>& sites, const BaseModel& model,
                                 const std::vector<LanguageSpec>& langs, const RankPolicy& policy,
                                 Placement placement, Rng& rng);

// Exact trainable-element count for the given site dims and language ranks.
long trainable_param_count(const std::vector<std::pair<int, int>>& site_dims,
                           const std::vector<int>& ranks);

// Convenience wrapper: logits for one (src, tgt) pair through the base model
// plus adapter stack (stack may be null for a pure base forward).
Tensor forward_logits(Tape& tape, const BaseModel& model, const AdapterStack* stack,
                      const RoutingContext& routing, std::span<const int> src_ids,
                      std::span<const int> tgt_in_ids);

}  // namespace lslab

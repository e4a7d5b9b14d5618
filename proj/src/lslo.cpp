// SPDX-License-Identifier: Apache-2.0
#include "lslab/lslo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lslab/errors.hpp"

namespace lslab {

char resource_letter(ResourceType t) {
  switch (t) {
    case ResourceType::High: return 'H';
    case ResourceType::Medium: return 'M';
    case ResourceType::Low: return 'L';
    case ResourceType::VeryLow: return 'V';
  }
  return '?';
}

const char* to_string(ResourceType t) {
  switch (t) {
    case ResourceType::High: return "High";
    case ResourceType::Medium: return "Medium";
    case ResourceType::Low: return "Low";
    case ResourceType::VeryLow: return "VeryLow";
  }
  return "?";
}

ResourceType resource_from_string(const std::string& s) {
  if (s == "High" || s == "H" || s == "high") return ResourceType::High;
  if (s == "Medium" || s == "M" || s == "medium") return ResourceType::Medium;
  if (s == "Low" || s == "L" || s == "low") return ResourceType::Low;
  if (s == "VeryLow" || s == "V" || s == "very_low" || s == "verylow") return ResourceType::VeryLow;
  throw ConfigError("unknown resource type: " + s);
}

RankPolicy RankPolicy::parse(const std::string& text) {
  std::vector<int> ranks;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (part.empty()) throw ConfigError("rank policy: empty component in \"" + text + "\"");
    std::size_t pos = 0;
    int r = 0;
    try {
      r = std::stoi(part, &pos);
    } catch (const std::exception&) {
      throw ConfigError("rank policy: bad integer \"" + part + "\"");
    }
    if (pos != part.size() || r < 1)
      throw ConfigError("rank policy: ranks must be positive integers, got \"" + part + "\"");
    ranks.push_back(r);
  }
  RankPolicy p;
  if (ranks.size() == 3) {
    p.rank_of = {{ResourceType::High, ranks[0]},
                 {ResourceType::Medium, ranks[1]},
                 {ResourceType::VeryLow, ranks[2]}};
  } else if (ranks.size() == 4) {
    p.rank_of = {{ResourceType::High, ranks[0]},
                 {ResourceType::Medium, ranks[1]},
                 {ResourceType::Low, ranks[2]},
                 {ResourceType::VeryLow, ranks[3]}};
  } else {
    throw ConfigError("rank policy: expected 3 (H;M;V) or 4 (H;M;L;V) components, got " +
                      std::to_string(ranks.size()));
  }
  return p;
}

RankPolicy RankPolicy::uniform(int rank) {
  if (rank < 1) throw ConfigError("rank policy: rank must be >= 1");
  RankPolicy p;
  p.rank_of = {{ResourceType::High, rank},
               {ResourceType::Medium, rank},
               {ResourceType::Low, rank},
               {ResourceType::VeryLow, rank}};
  return p;
}

int RankPolicy::rank_for(const LanguageSpec& lang) const {
  auto it = rank_of.find(lang.resource_type);
  if (it == rank_of.end())
    throw ConfigError(std::string("rank policy does not cover resource type ") +
                      to_string(lang.resource_type) + " (language " + lang.code + ")");
  return it->second;
}

std::string RankPolicy::label() const {
  // Row-label order H;M[;L];V.
  std::ostringstream os;
  bool first = true;
  for (ResourceType t : {ResourceType::High, ResourceType::Medium, ResourceType::Low,
                         ResourceType::VeryLow}) {
    auto it = rank_of.find(t);
    if (it == rank_of.end()) continue;
    if (!first) os << ";";
    os << it->second;
    first = false;
  }
  return os.str();
}

Placement placement_from_string(const std::string& s) {
  if (s == "all") return Placement::All;
  if (s == "only_fc" || s == "fc") return Placement::OnlyFc;
  if (s == "only_attn" || s == "attn") return Placement::OnlyAttn;
  throw ConfigError("unknown placement: " + s);
}

const char* to_string(Placement p) {
  switch (p) {
    case Placement::All: return "all";
    case Placement::OnlyFc: return "only_fc";
    case Placement::OnlyAttn: return "only_attn";
  }
  return "?";
}

const LangFactors& LsloAdapter::factors(const std::string& lang) const {
  auto it = langs.find(lang);
  if (it == langs.end())
    throw RoutingError("no adapter for language \"" + lang + "\" at site " + site.name());
  return it->second;
}

Tensor LsloAdapter::forward(Tape& tape, const Tensor& x, const std::string& lang) const {
  const LangFactors& f = factors(lang);
  // B masked at every read, so pruned entries neither fire nor receive grad.
  Tensor b_eff = tape.mul(f.B, f.mask);
  return tape.matmul_nt(tape.matmul_nt(x, f.A), b_eff);
}

IndexStrategy IndexStrategy::all_target(int num_layers) {
  IndexStrategy s;
  s.encoder.assign(static_cast<std::size_t>(num_layers), IndexChoice::TargetIndexed);
  s.decoder.assign(static_cast<std::size_t>(num_layers), IndexChoice::TargetIndexed);
  return s;
}

IndexChoice IndexStrategy::choice(Side side, int layer) const {
  const auto& v = side == Side::Encoder ? encoder : decoder;
  if (layer < 0 || layer >= static_cast<int>(v.size()))
    throw ValueError("index strategy has no entry for layer " + std::to_string(layer));
  return v[static_cast<std::size_t>(layer)];
}

WeightLearningState WeightLearningState::init(int num_layers) {
  WeightLearningState wl;
  for (int l = 0; l < num_layers; ++l) {
    wl.encoder_u.push_back(Tensor::zeros({2}, true));
    wl.decoder_u.push_back(Tensor::zeros({2}, true));
  }
  return wl;
}

const Tensor& WeightLearningState::u(Side side, int layer) const {
  const auto& v = side == Side::Encoder ? encoder_u : decoder_u;
  if (layer < 0 || layer >= static_cast<int>(v.size()))
    throw ValueError("weight learning state has no layer " + std::to_string(layer));
  return v[static_cast<std::size_t>(layer)];
}

std::pair<double, double> WeightLearningState::weights(Side side, int layer) const {
  const Tensor& raw = u(side, layer);
  double a = raw.data()[0], b = raw.data()[1];
  double mx = std::max(a, b);
  double ea = std::exp(a - mx), eb = std::exp(b - mx);
  double z = ea + eb;
  return {ea / z, eb / z};
}

IndexStrategy resolve_index_strategy(const WeightLearningState& wl) {
  IndexStrategy s;
  auto resolve_side = [&wl](Side side, std::size_t n) {
    std::vector<IndexChoice> out;
    for (std::size_t l = 0; l < n; ++l) {
      auto [w_src, w_tgt] = wl.weights(side, static_cast<int>(l));
      out.push_back(w_src > w_tgt ? IndexChoice::SourceIndexed : IndexChoice::TargetIndexed);
    }
    return out;
  };
  s.encoder = resolve_side(Side::Encoder, wl.encoder_u.size());
  s.decoder = resolve_side(Side::Decoder, wl.decoder_u.size());
  return s;
}

const LsloAdapter* AdapterStack::find(const LsloSite& site) const {
  auto it = index_.find(site);
  return it == index_.end() ? nullptr : &adapters_[it->second];
}

LsloAdapter* AdapterStack::find(const LsloSite& site) {
  auto it = index_.find(site);
  return it == index_.end() ? nullptr : &adapters_[it->second];
}

const LanguageSpec& AdapterStack::language(const std::string& code) const {
  for (const LanguageSpec& l : langs_)
    if (l.code == code) return l;
  throw RoutingError("unknown language \"" + code + "\"");
}

Tensor AdapterStack::apply(Tape& tape, const LsloSite& site, const Tensor& x) const {
  if (routing_.mode == RoutingMode::Off) return {};
  const LsloAdapter* ad = find(site);
  if (!ad) return {};
  if (routing_.mode == RoutingMode::Hard) {
    IndexChoice c = strategy_.choice(site.side, site.layer);
    const std::string& lang =
        c == IndexChoice::SourceIndexed ? routing_.src_lang : routing_.tgt_lang;
    return ad->forward(tape, x, lang);
  }
  // Mixture (weight learning). Same language on both branches collapses to a
  // single activation: the pair sums to one by construction.
  if (!wl_) throw RoutingError("mixture routing requested without weight-learning state");
  if (routing_.src_lang == routing_.tgt_lang) return ad->forward(tape, x, routing_.src_lang);
  Tensor w = tape.softmax(wl_->u(site.side, site.layer));
  Tensor w_src = tape.select(w, 0);
  Tensor w_tgt = tape.select(w, 1);
  Tensor src_branch = ad->forward(tape, x, routing_.src_lang);
  Tensor tgt_branch = ad->forward(tape, x, routing_.tgt_lang);
  return tape.add(tape.scale_by(src_branch, w_src), tape.scale_by(tgt_branch, w_tgt));
}

std::vector<std::pair<std::string, Tensor>> AdapterStack::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const LsloAdapter& ad : adapters_) {
    for (const std::string& code : ad.lang_order) {
      const LangFactors& f = ad.langs.at(code);
      std::string p = "adapter." + ad.site.name() + "." + code;
      out.emplace_back(p + ".A", f.A);
      out.emplace_back(p + ".B", f.B);
    }
  }
  if (wl_) {
    for (std::size_t l = 0; l < wl_->encoder_u.size(); ++l)
      out.emplace_back("wl.enc.l" + std::to_string(l) + ".u", wl_->encoder_u[l]);
    for (std::size_t l = 0; l < wl_->decoder_u.size(); ++l)
      out.emplace_back("wl.dec.l" + std::to_string(l) + ".u", wl_->decoder_u[l]);
  }
  return out;
}

long AdapterStack::trainable_param_count() const {
  long total = 0;
  for (const LsloAdapter& ad : adapters_)
    for (const auto& [code, f] : ad.langs)
      total += static_cast<long>(f.A.numel() + f.B.numel());
  return total;
}

void AdapterStack::apply_masks() {
  for (LsloAdapter& ad : adapters_) {
    for (auto& [code, f] : ad.langs) {
      auto b = f.B.data();
      auto m = f.mask.data();
      for (std::size_t i = 0; i < b.size(); ++i)
        if (m[i] == 0.0) b[i] = 0.0;
    }
  }
}

AdapterStack build_adapter_stack(const std::vector<LsloSite>& sites, const BaseModel& model,
                                 const std::vector<LanguageSpec>& langs, const RankPolicy& policy,
                                 Placement placement, Rng& rng) {
  for (std::size_t i = 0; i < langs.size(); ++i)
    for (std::size_t j = i + 1; j < langs.size(); ++j)
      if (langs[i].code == langs[j].code)
        throw ConfigError("duplicate language code \"" + langs[i].code + "\"");
  // Check policy coverage up front so the error does not depend on placement.
  for (const LanguageSpec& l : langs) policy.rank_for(l);

  AdapterStack stack;
  stack.langs_ = langs;
  stack.strategy_ = IndexStrategy::all_target(model.config().num_layers);
  for (const LsloSite& site : sites) {
    bool fc = !kind_is_attention(site.kind);
    if (placement == Placement::OnlyFc && !fc) continue;
    if (placement == Placement::OnlyAttn && fc) continue;
    auto [d, k] = model.site_dims(site);
    LsloAdapter ad;
    ad.site = site;
    ad.d = d;
    ad.k = k;
    for (const LanguageSpec& lang : langs) {
      int r = policy.rank_for(lang);
      Rng lr = rng.split(site.name() + ":" + lang.code);
      LangFactors f;
      f.A = Tensor::randn({r, k}, lr, 1.0 / std::sqrt(static_cast<double>(r)), true);
      f.B = Tensor::zeros({d, r}, true);
      f.mask = Tensor::full({d, r}, 1.0, false);
      ad.lang_order.push_back(lang.code);
      ad.langs.emplace(lang.code, std::move(f));
    }
    stack.index_[site] = stack.adapters_.size();
    stack.adapters_.push_back(std::move(ad));
  }
  return stack;
}

long trainable_param_count(const std::vector<std::pair<int, int>>& site_dims,
                           const std::vector<int>& ranks) {
  long total = 0;
  for (const auto& [d, k] : site_dims)
    for (int r : ranks) total += static_cast<long>(d) * r + static_cast<long>(r) * k;
  return total;
}

Tensor forward_logits(Tape& tape, const BaseModel& model, const AdapterStack* stack,
                      const RoutingContext& routing, std::span<const int> src_ids,
                      std::span<const int> tgt_in_ids) {
  if (!stack) return model_forward(tape, model, nullptr, src_ids, tgt_in_ids);
  // set_routing is a per-batch mutation of run-local state; the stack is
  // exclusively owned by its run.
  const_cast<AdapterStack*>(stack)->set_routing(routing);
  return model_forward(tape, model, stack, src_ids, tgt_in_ids);
}

}  // namespace lslab

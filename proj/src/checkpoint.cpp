// SPDX-License-Identifier: Apache-2.0
#include "lslab/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "lslab/errors.hpp"

namespace lslab {

using nlohmann::json;

namespace {

static_assert(sizeof(double) == 8);

void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

// Doubles travel as their bit pattern through a u64; the shift-based u64
// packing is little-endian regardless of host byte order.
void append_doubles_le(std::string& out, std::span<const double> xs) {
  for (double x : xs) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    append_u64_le(out, bits);
  }
}

void read_doubles_le(const unsigned char* p, std::span<double> xs) {
  for (double& x : xs) {
    std::uint64_t bits = read_u64_le(p);
    std::memcpy(&x, &bits, 8);
    p += 8;
  }
}

json strategy_to_json(const IndexStrategy& s) {
  auto side = [](const std::vector<IndexChoice>& v) {
    json arr = json::array();
    for (IndexChoice c : v) arr.push_back(c == IndexChoice::SourceIndexed ? "source" : "target");
    return arr;
  };
  return {{"encoder", side(s.encoder)}, {"decoder", side(s.decoder)}};
}

IndexStrategy strategy_from_json(const json& j) {
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
  return s;
}

std::vector<std::pair<std::string, Tensor>> all_tensors(const BaseModel& model,
                                                        const AdapterStack* stack) {
  auto named = model.named_params();
  if (stack) {
    for (const LsloAdapter& ad : stack->adapters()) {
      for (const std::string& code : ad.lang_order) {
        const LangFactors& f = ad.langs.at(code);
        std::string p = "adapter." + ad.site.name() + "." + code;
        named.emplace_back(p + ".A", f.A);
        named.emplace_back(p + ".B", f.B);
        named.emplace_back(p + ".mask", f.mask);
      }
    }
    if (stack->has_weight_learning()) {
      const WeightLearningState& wl = stack->weight_learning();
      for (std::size_t l = 0; l < wl.encoder_u.size(); ++l)
        named.emplace_back("wl.enc.l" + std::to_string(l) + ".u", wl.encoder_u[l]);
      for (std::size_t l = 0; l < wl.decoder_u.size(); ++l)
        named.emplace_back("wl.dec.l" + std::to_string(l) + ".u", wl.decoder_u[l]);
    }
  }
  return named;
}

}  // namespace

void save_checkpoint(const std::string& path, const BaseModel& model, const AdapterStack* stack) {
  const ModelConfig& cfg = model.config();
  json header;
  header["format_version"] = 1;
  header["model_config"] = {{"num_layers", cfg.num_layers}, {"d_model", cfg.d_model},
                            {"num_heads", cfg.num_heads},   {"d_ffn", cfg.d_ffn},
                            {"vocab_size", cfg.vocab_size}, {"max_len", cfg.max_len}};
  if (stack) {
    json langs = json::array();
    for (const LanguageSpec& l : stack->languages())
      langs.push_back({{"code", l.code},
                       {"resource_type", to_string(l.resource_type)},
                       {"corpus_size", l.corpus_size},
                       {"rank", l.rank}});
    json adapted_sites = json::array();
    for (const LsloAdapter& ad : stack->adapters()) adapted_sites.push_back(ad.site.name());
    json per_lang_ranks = json::object();
    if (!stack->adapters().empty())
      for (const auto& [code, f] : stack->adapters().front().langs)
        per_lang_ranks[code] = f.A.dim(0);
    header["adapter_config"] = {{"languages", langs},
                                {"sites", adapted_sites},
                                {"ranks", per_lang_ranks},
                                {"strategy", strategy_to_json(stack->strategy())},
                                {"weight_learning", stack->has_weight_learning()}};
  }

  auto named = all_tensors(model, stack);
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : named) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.numel()) * 8;
  }
  header["manifest"] = manifest;

  std::string header_bytes = header.dump();
  std::string out;
  append_u64_le(out, header_bytes.size());
  out += header_bytes;
  for (const auto& [name, t] : named) append_doubles_le(out, t.data());

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingError("checkpoint not found: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw IoError("checkpoint truncated: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint64_t hlen = read_u64_le(p);
  if (8 + hlen > bytes.size()) throw IoError("checkpoint header truncated: " + path);
  json header = json::parse(bytes.substr(8, hlen));
  std::size_t payload_base = 8 + hlen;

  const json& mc = header.at("model_config");
  ModelConfig cfg;
  cfg.num_layers = mc.at("num_layers").get<int>();
  cfg.d_model = mc.at("d_model").get<int>();
  cfg.num_heads = mc.at("num_heads").get<int>();
  cfg.d_ffn = mc.at("d_ffn").get<int>();
  cfg.vocab_size = mc.at("vocab_size").get<int>();
  cfg.max_len = mc.at("max_len").get<int>();

  Checkpoint ck;
  ck.model = build_model(cfg, 0);

  if (header.contains("adapter_config")) {
    const json& ac = header.at("adapter_config");
    std::vector<LanguageSpec> langs;
    for (const json& jl : ac.at("languages")) {
      LanguageSpec l;
      l.code = jl.at("code").get<std::string>();
      l.resource_type = resource_from_string(jl.at("resource_type").get<std::string>());
      l.corpus_size = jl.at("corpus_size").get<long>();
      l.rank = jl.at("rank").get<int>();
      langs.push_back(std::move(l));
    }
    // Rebuild the stack shape: explicit per-language ranks, explicit site set.
    RankPolicy policy;
    const json& ranks = ac.at("ranks");
    for (const LanguageSpec& l : langs) {
      int r = ranks.at(l.code).get<int>();
      auto it = policy.rank_of.find(l.resource_type);
      if (it == policy.rank_of.end())
        policy.rank_of[l.resource_type] = r;
      else if (it->second != r)
        throw IoError("checkpoint: inconsistent ranks within resource type");
    }
    std::set<std::string> site_names;
    for (const json& s : ac.at("sites")) site_names.insert(s.get<std::string>());
    std::vector<LsloSite> sites;
    for (const LsloSite& s : enumerate_sites(cfg))
      if (site_names.count(s.name())) sites.push_back(s);
    Rng dummy(0);
    ck.stack = build_adapter_stack(sites, ck.model, langs, policy, Placement::All, dummy);
    ck.stack->set_strategy(strategy_from_json(ac.at("strategy")));
    if (ac.at("weight_learning").get<bool>()) ck.stack->enable_weight_learning(cfg.num_layers);
  }

  // Overwrite every tensor from the payload by manifest name.
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : all_tensors(ck.model, ck.stack ? &*ck.stack : nullptr))
    by_name.emplace(name, t);
  for (const json& entry : header.at("manifest")) {
    std::string name = entry.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint: unknown tensor \"" + name + "\"");
    Tensor t = it->second;
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != t.shape()) throw IoError("checkpoint: shape mismatch for \"" + name + "\"");
    std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    std::size_t need = payload_base + offset + t.numel() * 8;
    if (need > bytes.size()) throw IoError("checkpoint payload truncated at \"" + name + "\"");
    read_doubles_le(reinterpret_cast<const unsigned char*>(bytes.data()) + payload_base + offset,
                    t.data());
  }
  return ck;
}

std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingError("cannot hash missing file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::uint64_t h = fnv1a(bytes);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lslab

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "lslab/checkpoint.hpp"
#include "lslab/errors.hpp"

using namespace lslab;

namespace {

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("checkpoint round-trips base and adapters bit-exactly") {
  namespace fs = std::filesystem;
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.d_model = 16;
  cfg.num_heads = 2;
  cfg.d_ffn = 24;
  cfg.vocab_size = 33;
  cfg.max_len = 10;
  BaseModel model = build_model(cfg, 77);

  Rng rng(3);
  std::vector<LanguageSpec> langs{{"aa", ResourceType::High, 100, 1},
                                  {"bb", ResourceType::VeryLow, 10, 1}};
  AdapterStack stack = build_adapter_stack(enumerate_sites(cfg), model, langs,
                                           RankPolicy::parse("2;2;4"), Placement::OnlyFc, rng);
  stack.enable_weight_learning(cfg.num_layers);
  // Scatter non-trivial values through factors, masks, and mixing logits.
  for (LsloAdapter& ad : stack.adapters())
    for (auto& [code, f] : ad.langs) {
      for (double& v : f.B.data()) v = rng.normal(0, 0.77);
      f.mask.data()[0] = 0.0;
    }
  stack.weight_learning().encoder_u[0].data()[0] = 0.25;
  IndexStrategy strat = IndexStrategy::all_target(cfg.num_layers);
  strat.encoder[0] = IndexChoice::SourceIndexed;
  stack.set_strategy(strat);

  std::string path = (fs::temp_directory_path() / "lslab_ckpt_test.bin").string();
  save_checkpoint(path, model, &stack);
  Checkpoint back = load_checkpoint(path);

  auto orig = model.named_params();
  auto got = back.model.named_params();
  REQUIRE(orig.size() == got.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == got[i].first);
    CHECK(same_bytes(orig[i].second, got[i].second));
  }

  REQUIRE(back.stack.has_value());
  REQUIRE(back.stack->adapters().size() == stack.adapters().size());
  for (std::size_t i = 0; i < stack.adapters().size(); ++i) {
    const LsloAdapter& a = stack.adapters()[i];
    const LsloAdapter& b = back.stack->adapters()[i];
    CHECK(a.site == b.site);
    for (const std::string& code : a.lang_order) {
      CHECK(same_bytes(a.langs.at(code).A, b.langs.at(code).A));
      CHECK(same_bytes(a.langs.at(code).B, b.langs.at(code).B));
      CHECK(same_bytes(a.langs.at(code).mask, b.langs.at(code).mask));
    }
  }
  CHECK(back.stack->strategy().encoder[0] == IndexChoice::SourceIndexed);
  CHECK(back.stack->strategy().encoder[1] == IndexChoice::TargetIndexed);
  REQUIRE(back.stack->has_weight_learning());
  CHECK(back.stack->weight_learning().encoder_u[0].data()[0] == 0.25);

  // Saving the loaded state again reproduces the identical file.
  std::string path2 = path + ".again";
  save_checkpoint(path2, back.model, &*back.stack);
  CHECK(file_hash(path) == file_hash(path2));

  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("missing checkpoint raises a missing-prerequisite error") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/lslab.bin"), MissingError);
}

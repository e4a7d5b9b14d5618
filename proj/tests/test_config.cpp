// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "lslab/config.hpp"
#include "lslab/errors.hpp"
#include "lslab/experiment.hpp"

using namespace lslab;
using nlohmann::json;

namespace {

json minimal_doc() {
  return json::parse(R"({
    "output_dir": "out",
    "corpus": {
      "languages": [
        {"code": "aa", "resource_type": "High", "corpus_size": 100},
        {"code": "bb", "resource_type": "VeryLow", "corpus_size": 10}
      ],
      "num_sets": 50
    },
    "model": {"num_layers": 2, "d_model": 16, "num_heads": 2, "d_ffn": 24, "max_len": 16}
  })");
}

}  // namespace

TEST_CASE("minimal config parses with defaults") {
  ExperimentConfig cfg = ExperimentConfig::from_json(minimal_doc());
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.corpus.languages.size() == 2);
  CHECK(cfg.model.num_layers == 2);
  CHECK(cfg.ft_all.learning_rate == doctest::Approx(1e-4));
  CHECK(cfg.lslo_finetune.learning_rate == doctest::Approx(3e-3));
  CHECK(cfg.lslo_finetune.epochs == 15);
  CHECK(cfg.weight_learn.rank == 8);
  // Published schedule defaults: ratio 0.7, start epoch 2, ramp 8, T 15.
  CHECK(cfg.estimate.estimate_ratio == doctest::Approx(0.7));
  CHECK(cfg.estimate.estimate_start_epoch == 2);
  CHECK(cfg.estimate.estimate_ramp_epochs == 8);
  CHECK(cfg.estimate.epochs == 15);
  CHECK_FALSE(cfg.hash.empty());
}

TEST_CASE("unknown keys are rejected with their path") {
  json doc = minimal_doc();
  doc["corpus"]["typo_key"] = 1;
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(doc), doctest::Contains("typo_key"),
                       ConfigError);

  json doc2 = minimal_doc();
  doc2["phases"] = {{"lslo_finetune", {{"unknown_flag", true}}}};
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(doc2), doctest::Contains("unknown_flag"),
                       ConfigError);

  json doc3 = minimal_doc();
  doc3["stray"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc3), ConfigError);
}

TEST_CASE("gps section validates the schedule against the phase length") {
  json doc = minimal_doc();
  doc["phases"] = {{"lslo_finetune",
                    {{"epochs", 10},
                     {"gps", {{"target_ratio", 0.9}, {"start_epoch", 5}, {"duration_epochs", 8}}}}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);  // 5 + 8 > 10

  doc["phases"]["lslo_finetune"]["gps"]["start_epoch"] = 2;
  ExperimentConfig cfg = ExperimentConfig::from_json(doc);
  REQUIRE(cfg.lslo_finetune.gps.has_value());
  CHECK(cfg.lslo_finetune.gps->total_epochs == 10);
  CHECK(cfg.lslo_finetune.gps_scope ==
        std::set<ResourceType>{ResourceType::High, ResourceType::Medium});
}

TEST_CASE("config hash is stable and content-sensitive") {
  ExperimentConfig a = ExperimentConfig::from_json(minimal_doc());
  ExperimentConfig b = ExperimentConfig::from_json(minimal_doc());
  CHECK(a.hash == b.hash);
  json doc = minimal_doc();
  doc["corpus"]["num_sets"] = 51;
  CHECK(ExperimentConfig::from_json(doc).hash != a.hash);
}

TEST_CASE("method labels render in row-label style") {
  RankPolicy policy = RankPolicy::parse("2;2;8");
  PruneSchedule gps{0.9, 2, 8, 15};
  CHECK(method_label(policy, "+WL", gps) == "2;2;8+WL+GPS(0.9)");
  CHECK(method_label(policy, "+WL", std::nullopt) == "2;2;8+WL");
  CHECK(method_label(policy, "+SRC", PruneSchedule{0.5, 2, 8, 15}) == "2;2;8+SRC+GPS(0.5)");
  CHECK(method_label(RankPolicy::parse("2;2;8;8"), "+TGT", PruneSchedule{0.1, 2, 8, 15}) ==
        "2;2;8;8+TGT+GPS(0.1)");
}

TEST_CASE("bad documents fail loudly") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse("{}")), ConfigError);
  json doc = minimal_doc();
  doc["corpus"]["languages"][0]["resource_type"] = "Gigantic";
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
  json doc2 = minimal_doc();
  doc2["model"]["num_heads"] = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc2), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.json"), MissingError);
}

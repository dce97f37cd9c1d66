#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "eventformer/config.hpp"

using namespace evf;

TEST_CASE("config echo round-trips every section") {
  AppConfig cfg;
  cfg.run.d_m = 48;
  cfg.run.matching_mode = MatchingMode::kClassAgnostic;
  cfg.generator.T = 48;
  cfg.generator.cooccur_pairs = {{1, 2, 0.75}};
  cfg.optim.lr_main = 3e-4;
  cfg.train.epochs = 12;

  const std::string text = config_to_json(cfg);
  CHECK(config_to_json(cfg) == text);
  const AppConfig back = config_from_json(text);
  CHECK(back.run.d_m == 48);
  CHECK(back.run.matching_mode == MatchingMode::kClassAgnostic);
  CHECK(back.generator.T == 48);
  REQUIRE(back.generator.cooccur_pairs.size() == 1);
  CHECK(back.generator.cooccur_pairs[0].prob == 0.75);
  CHECK(back.optim.lr_main == 3e-4);
  CHECK(back.train.epochs == 12);
}

TEST_CASE("partial configs fall back to defaults") {
  const AppConfig cfg = config_from_json(R"({"run": {"C": 2}})");
  CHECK(cfg.run.C == 2);
  CHECK(cfg.run.N0 == 100);
  CHECK(cfg.train.epochs == 30);
  CHECK(cfg.optim.lr_feat == 1e-5);
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK_THROWS_WITH_AS(config_from_json(R"({"run": {"bogus": 1}})"),
                       doctest::Contains("run.bogus"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_json(R"({"extra": {}})"),
                       doctest::Contains("unknown section"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"run": {"C": "two"}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"run": {"matching_mode": "magic"}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json("[1,2]"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json("{nope"), std::invalid_argument);
}

TEST_CASE("dotted overrides reach every section") {
  AppConfig cfg;
  apply_override(cfg, "run.d_m", "128");
  apply_override(cfg, "run.matching_mode", "class_agnostic");
  apply_override(cfg, "optim.lr_main", "0.001");
  apply_override(cfg, "train.epochs", "3");
  apply_override(cfg, "generator.T", "32");
  apply_override(cfg, "generator.cooccur_pairs", "[[1, 2, 1.0]]");
  CHECK(cfg.run.d_m == 128);
  CHECK(cfg.run.matching_mode == MatchingMode::kClassAgnostic);
  CHECK(cfg.optim.lr_main == 0.001);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.generator.T == 32);
  REQUIRE(cfg.generator.cooccur_pairs.size() == 1);
  CHECK(cfg.generator.cooccur_pairs[0].class_b == 2);

  CHECK_THROWS_AS(apply_override(cfg, "run.bogus", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(cfg, "", "1"), std::invalid_argument);
}

TEST_CASE("batched overrides may cross an invalid intermediate state") {
  // generator.T=10 alone would violate max_len <= T against the default 24
  const AppConfig cfg = with_overrides(
      AppConfig{}, {{"generator.T", "10"}, {"generator.max_len", "6"}});
  CHECK(cfg.generator.T == 10);
  CHECK(cfg.generator.max_len == 6);
  CHECK_THROWS_AS(with_overrides(AppConfig{}, {{"generator.T", "10"}}),
                  std::invalid_argument);
}

TEST_CASE("config files load with diagnostics") {
  const std::string path = "cfg_test.json";
  {
    std::ofstream out(path);
    out << R"({"train": {"batch_size": 4}})";
  }
  const AppConfig cfg = load_config(path);
  CHECK(cfg.train.batch_size == 4);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config("does_not_exist.json"), std::runtime_error);
}

TEST_CASE("checkpoint config embeds the feature width") {
  AppConfig cfg;
  cfg.run.L = 1;
  const std::string text = checkpoint_config_json(cfg, 16);
  const CheckpointConfig cc = checkpoint_config_from_json(text);
  CHECK(cc.feature_dim == 16);
  CHECK(cc.app.run.L == 1);
  CHECK_THROWS_AS(checkpoint_config_from_json("{}"), std::runtime_error);
}

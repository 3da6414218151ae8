#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "marn/config.hpp"

using namespace marn;
using nlohmann::json;

TEST_CASE("default config round trips through JSON") {
  const RunConfig c;
  CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("every field survives a round trip") {
  RunConfig c;
  c.data.frames = 20;
  c.data.motion_confusable_rate = 0.25;
  c.data.world_seed = 99;
  c.dims.model_dim = 48;
  c.dims.heads = 4;
  c.dims.scale_affinity = true;
  c.proposal_sizes = {3, 5, 7};
  c.proposal_stride = 2;
  c.loss = {0.6, 0.01};
  c.optimizer.lr = 1.5e-3;
  c.optimizer.clip_norm = 2.0;
  c.train = {7, 3, 2, 42};
  c.flags = variant_flags("maa-motion-guided");
  c.nms_threshold = 0.4;
  c.grid.ns = {1, 3};
  c.grid.ms = {0.5};
  c.paths = {"a.bin", "b.bin", "c.bin"};
  const auto back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.flags == c.flags);
  CHECK(back.optimizer.lr == 1.5e-3);
  CHECK(back.proposal_sizes == std::vector<std::size_t>{3, 5, 7});
}

TEST_CASE("missing keys keep defaults") {
  const auto c = run_config_from_json(json::parse(R"({"train": {"epochs": 3}})"));
  CHECK(c.train.epochs == 3);
  CHECK(c.train.batch_size == RunConfig{}.train.batch_size);
  CHECK(c.optimizer.lr == 4e-4);
  CHECK(c.optimizer.clip_norm == 1.0);
  CHECK(c.loss.boundary_weight == 0.005);
  CHECK(c.loss.positive_threshold == 0.55);
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"trian": {}})")), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"model": {"model_dims": 8}})")), ConfigError);
  try {
    run_config_from_json(json::parse(R"({"optimizer": {"learning_rate": 1}})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
}

TEST_CASE("wrong types are rejected") {
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train": {"epochs": "ten"}})")), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"flags": 3})")), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json::parse("[1, 2]")), ConfigError);
}

TEST_CASE("validation") {
  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.loss.positive_threshold = 1.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.loss.positive_threshold = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.dims.model_dim = 63; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.dims.heads = 5; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.proposal_sizes = {40}; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.proposal_sizes.clear(); }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.optimizer.lr = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.train.batch_size = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.flags.motion_encoder = false; }).validate(), ConfigError);
}

TEST_CASE("named variants") {
  for (const auto& name : variant_names()) CHECK_NOTHROW(variant_flags(name).validate());
  CHECK(variant_names().size() == 8);
  const auto base = variant_flags("baseline");
  CHECK_FALSE(base.appearance_branch);
  CHECK_FALSE(base.motion_encoder);
  CHECK(variant_flags("full") == VariantFlags{});
  const auto none = variant_flags("maa-none");
  CHECK(none.maa);
  CHECK_FALSE(none.maa_motion_guided);
  CHECK_FALSE(none.maa_appearance_fused);
  CHECK(variant_flags("maa-motion-guided").maa_motion_guided);
  CHECK_FALSE(variant_flags("maa-motion-guided").maa_appearance_fused);
  CHECK_THROWS_AS(variant_flags("+MB"), ConfigError);
}

TEST_CASE("inconsistent flags") {
  VariantFlags f{false, false, true, false, false, false};
  CHECK_THROWS_AS(f.validate(), ConfigError);
  f = {true, false, false, true, false, false};
  CHECK_THROWS_AS(f.validate(), ConfigError);
  f = {true, true, true, false, true, false};
  CHECK_THROWS_AS(f.validate(), ConfigError);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "marn_test_config.json";
  std::ofstream(path) << R"({"model": {"model_dim": 32, "heads": 4}})";
  const auto c = load_run_config(path.string());
  CHECK(c.dims.model_dim == 32);
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_run_config(path.string()), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_run_config(path.string()), ConfigError);
}

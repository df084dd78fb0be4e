#include <doctest.h>

#include <filesystem>

#include "kpservo/config.hpp"
#include "kpservo/errors.hpp"
#include "kpservo/rng.hpp"

using namespace kpservo;

TEST_CASE("presets validate and round-trip through JSON") {
  for (const auto& cfg :
       {presets::planar_2j(), presets::planar_3j(presets::OcclusionSeverity::small),
        presets::planar_3j(presets::OcclusionSeverity::large),
        presets::spatial_4j(false), presets::spatial_4j(true), presets::track_eval()}) {
    const auto doc = to_json(cfg);
    const ExperimentConfig parsed = parse_config(doc);
    CHECK(to_json(parsed) == doc);
    CHECK(config_hash(parsed) == config_hash(cfg));
  }
}

TEST_CASE("unknown keys are rejected at any level") {
  auto doc = to_json(presets::planar_2j());
  doc["surprise"] = 1;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["servo"]["typo_gain"] = 0.5;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["manipulator"]["links"] = {0.3};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["scenario"]["occluders"][0] = {{"rect", {0, 0, 1, 1}}, {"speed", {1, 1}}};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("invariant violations are config errors") {
  auto doc = to_json(presets::planar_2j());
  doc["features"]["indices"] = {0, 0};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["features"]["indices"] = {9};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["servo"]["pinv_tolerance"] = 1.5;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["servo"]["lambda"] = -0.1;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["tracker"]["dt"] = 0.0;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["run"]["start_q"] = {9.0, 0.0};  // outside joint limits
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = to_json(presets::planar_2j());
  doc["tracker"]["p0_diag"] = {1.0, 2.0};  // wrong arity
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("feature dimension must cover the controlled joints") {
  ExperimentConfig cfg = presets::planar_2j();
  // One feature keypoint gives dimension 2 >= J = 2 and stays valid; the
  // manipulator keypoint floor is what rejects thinner setups.
  cfg.feature_indices = {0};
  CHECK_NOTHROW(cfg.validate());

  auto doc = to_json(presets::spatial_4j(false));
  doc["features"]["indices"] = {7};  // dimension 2 < J = 4
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("start_goal_pair honors the sampling constraints") {
  const ExperimentConfig cfg = presets::planar_2j();
  const PinholeCamera cam = cfg.camera.build();
  RngStream rng(4242, "scenario");
  for (int trial = 0; trial < 10; ++trial) {
    const auto [start, goal] = start_goal_pair(cfg, rng);
    for (const int j : cfg.manipulator.active_joints) {
      CHECK(std::abs(start(j) - goal(j)) <= cfg.run.sampling.max_joint_dist);
    }
    const auto ps = project_keypoints(cam, forward_keypoints(cfg.manipulator, {start}));
    const auto pg = project_keypoints(cam, forward_keypoints(cfg.manipulator, {goal}));
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < cfg.feature_indices.size(); ++i) {
      const int idx = cfg.feature_indices[i];
      CHECK(ps[idx].in_frustum);
      CHECK(pg[idx].in_frustum);
      const Eigen::Vector2d d = ps[idx].pixel - pg[idx].pixel;
      CHECK(std::min(std::abs(d.x()), std::abs(d.y())) >=
            cfg.run.sampling.min_coord_err_px);
      norm_sq += d.squaredNorm();
    }
    CHECK(std::sqrt(norm_sq) >= cfg.run.sampling.err_norm_min_px);
    CHECK(std::sqrt(norm_sq) <= cfg.run.sampling.err_norm_max_px);
  }
}

TEST_CASE("start_goal_pair returns fixed configurations untouched") {
  ExperimentConfig cfg = presets::planar_2j();
  Eigen::VectorXd q(2);
  q << 0.4, 0.6;
  cfg.run.start_q = q;
  cfg.run.goal_q = q;
  RngStream rng(1, "scenario");
  const auto [start, goal] = start_goal_pair(cfg, rng);
  CHECK(start == q);
  CHECK(goal == q);
}

TEST_CASE("impossible sampling constraints raise a config error") {
  ExperimentConfig cfg = presets::planar_2j();
  cfg.run.sampling.err_norm_min_px = 1e5;
  cfg.run.sampling.err_norm_max_px = 2e5;
  cfg.run.sampling.max_attempts = 200;
  RngStream rng(1, "scenario");
  CHECK_THROWS_AS(start_goal_pair(cfg, rng), ConfigError);
}

TEST_CASE("shipped config files stay in sync with the presets") {
  const std::filesystem::path dir = KPSERVO_CONFIG_DIR;
  const std::pair<const char*, ExperimentConfig> files[] = {
      {"planar2j_nominal.json", presets::planar_2j()},
      {"planar3j_baseline.json", presets::planar_3j(presets::OcclusionSeverity::none)},
      {"planar3j_small_occlusion.json",
       presets::planar_3j(presets::OcclusionSeverity::small)},
      {"planar3j_large_occlusion.json",
       presets::planar_3j(presets::OcclusionSeverity::large)},
      {"spatial4j.json", presets::spatial_4j(false)},
      {"spatial4j_impoverished.json", presets::spatial_4j(true)},
      {"track_eval.json", presets::track_eval()},
  };
  for (const auto& [name, preset] : files) {
    CAPTURE(name);
    const ExperimentConfig loaded = load_config(dir / name);
    CHECK(to_json(loaded) == to_json(preset));
  }
}

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpservo/perception.hpp"
#include "kpservo/rng.hpp"
#include "kpservo/servo.hpp"
#include "kpservo/sim_camera.hpp"
#include "kpservo/sim_robot.hpp"
#include "kpservo/tracker.hpp"

namespace kpservo {

struct CameraSetup {
  double fx = 600.0, fy = 600.0, cx = 240.0, cy = 240.0;
  int image_width = 480, image_height = 480;
  Eigen::Vector3d position{0.45, 0.0, 1.7};
  Eigen::Vector3d look_at{0.45, 0.0, 0.2};
  Eigen::Vector3d up{1.0, 0.0, 0.0};

  PinholeCamera build() const {
    return make_look_at_camera(fx, fy, cx, cy, image_width, image_height, position, look_at,
                               up);
  }
};

struct ServoConfig {
  int window_size = 20;
  GammaMode gamma_mode = GammaMode::normalized;
  double gamma = 0.5;
  double lambda = 0.8;              // 1/s
  double qdot_clamp = 0.5;          // rad/s
  double pinv_tolerance = 1e-2;
  double success_error_px = 2.0;
  int success_dwell_ticks = 10;
  double excitation_amplitude = 0.05;  // rad/s
  int excitation_steps_per_joint = 5;
  std::string jacobian_warm_start = "zero";  // "zero" | "oracle"

  ControlGains gains() const { return {lambda, pinv_tolerance, qdot_clamp}; }
};

// Constraints for sampling random start/goal pairs: both configurations
// must project every feature inside the image with a margin, the initial
// feature error norm must land in a band, every feature coordinate must
// move by a minimum amount (keeps the per-feature overshoot measure
// well-conditioned) and the joint-space distance is capped (keeps image
// paths in the quasi-linear regime).
struct PairSampling {
  double max_joint_dist = 0.4;     // rad, per joint
  double min_coord_err_px = 10.0;
  double err_norm_min_px = 40.0;
  double err_norm_max_px = 150.0;
  double frustum_margin_px = 20.0;
  int max_attempts = 20000;
};

struct RunConfig {
  std::uint64_t seed = 42;
  int step_budget = 1000;  // total ticks including excitation
  int repeats = 1;
  std::optional<Eigen::VectorXd> start_q;  // absent -> sampled
  std::optional<Eigen::VectorXd> goal_q;
  PairSampling sampling;
};

// One scripted tracking experiment: sinusoidal joint motion plus its own
// occlusion scenario.
struct ScriptedExperiment {
  std::string name;
  std::vector<double> amplitudes;  // rad, per active joint
  std::vector<double> periods_s;   // per active joint
  std::vector<double> phases;      // rad, per active joint
  int ticks = 600;
  OcclusionScenario scenario;
};

struct JacobianCheckConfig {
  int samples = 300;
  std::string warm_start = "zero";  // "zero" | "oracle"
};

struct DatasetExportConfig {
  int resolution = 100;       // steps per joint pass
  double v_max = 0.5;         // rad/s cap for the sweep
  std::string mode = "planar";  // "planar" | "spatial"
  double bb_size = 40.0;      // pixels (planar boxes)
  double marker_size_m = 0.04;  // physical marker side (spatial boxes)
};

struct ExperimentConfig {
  std::string scenario_name = "unnamed";
  ManipulatorModel manipulator;
  CameraSetup camera;
  std::vector<int> feature_indices;  // keypoints used as control features
  OcclusionScenario scenario;
  NoiseConfig tracker_noise;
  SigmaParams sigma_params;
  GatePolicy gate;
  ServoConfig servo;
  RunConfig run;
  std::vector<ScriptedExperiment> track_eval;
  JacobianCheckConfig jacobian_check;
  DatasetExportConfig dataset_export;

  int feature_dim() const { return 2 * static_cast<int>(feature_indices.size()); }
  int active_joint_count() const { return static_cast<int>(manipulator.active_joints.size()); }

  // Throws ConfigError on any violated invariant (unknown keys are already
  // rejected at parse time).
  void validate() const;
};

// Strict parser: unknown keys anywhere raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

// FNV-1a hash of the canonical serialized config, for run manifests.
std::string config_hash(const ExperimentConfig& config);

// Returns the run's start/goal configurations: the fixed ones when the
// config pins them, otherwise rejection-sampled under the PairSampling
// constraints. Throws ConfigError when sampling cannot satisfy the
// constraints or a fixed pair violates them structurally (features out of
// frame).
std::pair<Eigen::VectorXd, Eigen::VectorXd> start_goal_pair(const ExperimentConfig& config,
                                                            RngStream& rng);

namespace presets {

// 2 planar joints, 3 keypoints; the nominal convergence scenario.
ExperimentConfig planar_2j();

enum class OcclusionSeverity { none, small, large };

// 3 planar joints, 5 keypoints, with the occlusion-severity ladder.
ExperimentConfig planar_3j(OcclusionSeverity severity);

// Spatial base + 3 planar joints, 8 keypoint anchors. The standard variant
// controls with 6 well-spread features; the impoverished variant uses 3
// tip-clustered features and is expected to struggle with depth ambiguity.
ExperimentConfig spatial_4j(bool impoverished_features = false);

// 3-joint tracking config carrying the five scripted occlusion experiments.
ExperimentConfig track_eval();

}  // namespace presets

}  // namespace kpservo

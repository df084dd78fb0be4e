#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kpservo/tracker.hpp"

namespace kpservo {

enum class RunOutcome { success, budget_exhausted, adaptation_divergence, filter_divergence };

std::string to_string(RunOutcome outcome);
std::string to_string(KeypointStatus status);

struct TrajectoryTick {
  double t = 0.0;
  double err_norm = 0.0;
  Eigen::VectorXd e;          // 2K per-feature errors
  Eigen::VectorXd q;          // active joint angles
  Eigen::VectorXd q_dot_cmd;  // commanded velocities for active joints
  std::vector<KeypointStatus> status;  // per keypoint
  double jac_residual = 0.0;  // Frobenius residual of the current window
};

struct TrajectoryRecord {
  std::string scenario_id;
  std::uint64_t seed = 0;
  RunOutcome outcome = RunOutcome::budget_exhausted;
  double dt = 0.1;
  int excitation_ticks = 0;
  std::optional<int> success_tick;
  std::vector<TrajectoryTick> ticks;

  std::vector<double> times() const;
  std::vector<double> error_norms() const;
  std::vector<Eigen::VectorXd> feature_errors() const;
};

// CSV schema: header row, columns
//   t, err_norm, e_1..e_2K, q_1..q_J, qdot_1..qdot_J, status_1..status_K, jac_residual
// with numbers printed to 9 significant digits.
void write_trajectory_csv(const TrajectoryRecord& record, const std::filesystem::path& path);
TrajectoryRecord read_trajectory_csv(const std::filesystem::path& path);

}  // namespace kpservo

#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "kpservo/sim_camera.hpp"

namespace kpservo {

// Keypoint attached to a link at a fractional position along it.
struct KeypointAnchor {
  int link = 0;
  double fraction = 0.0;  // 0 = proximal joint, 1 = distal end
};

// Simulated serial manipulator: a planar revolute chain, optionally
// preceded by a base joint rotating about the vertical world axis. Without
// the spatial base the chain lies in the horizontal plane z = base_height;
// with it, the chain lives in a vertical plane that the base joint yaws
// around the world z axis, which is what produces out-of-plane motion for
// a fixed camera.
struct ManipulatorModel {
  std::vector<double> link_lengths;            // meters
  std::vector<KeypointAnchor> keypoint_anchors;
  std::vector<int> active_joints;              // indices into the joint vector
  bool has_spatial_base = false;
  double base_height = 0.2;                    // meters
  std::vector<std::pair<double, double>> joint_limits;  // radians, size joint_count()

  int joint_count() const {
    return static_cast<int>(link_lengths.size()) + (has_spatial_base ? 1 : 0);
  }
  int keypoint_count() const { return static_cast<int>(keypoint_anchors.size()); }

  // Throws std::invalid_argument on violated invariants (empty/non-positive
  // links, anchor fractions outside [0,1], limit min >= max, too few
  // keypoints for the number of controlled joints).
  void validate() const;
};

struct JointConfiguration {
  Eigen::VectorXd q;  // radians, one entry per joint (spatial base first)
};

// Ground-truth 3D keypoint positions. Throws LimitViolationError when any
// joint is outside its limits.
std::vector<Eigen::Vector3d> forward_keypoints(const ManipulatorModel& model,
                                               const JointConfiguration& q);

// Joint speed for sweeping a motion range M in `resolution` steps of
// duration dt, capped at v_max: min(M / (resolution * dt), v_max).
double traversal_velocity(double motion_range, int resolution, double dt, double v_max);

struct StepResult {
  JointConfiguration q;
  std::vector<bool> saturated;  // per joint, true when the limit clamp engaged
  bool any_saturated() const;
};

// Euler step q' = q + q_dot * dt, clamped per joint to the limits.
StepResult step(const JointConfiguration& q, const Eigen::VectorXd& q_dot, double dt,
                const ManipulatorModel& model);

// Central finite-difference image Jacobian of all projected keypoints with
// respect to the active joints: 2K x J, pixels per radian. Test oracle for
// the online estimate. Throws OracleUnavailableError when a perturbed
// configuration fails to project.
Eigen::MatrixXd oracle_image_jacobian(const ManipulatorModel& model,
                                      const PinholeCamera& camera,
                                      const JointConfiguration& q, double eps);

// Selects the (u, v) row pairs of `full` for the given keypoint indices.
Eigen::MatrixXd select_feature_rows(const Eigen::MatrixXd& full,
                                    const std::vector<int>& keypoint_indices);

namespace detail {
// Kinematics without the joint-limit check; used by the Jacobian oracle so
// that limit-adjacent perturbations stay evaluable.
std::vector<Eigen::Vector3d> forward_keypoints_unchecked(const ManipulatorModel& model,
                                                         const Eigen::VectorXd& q);
}  // namespace detail

}  // namespace kpservo

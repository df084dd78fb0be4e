#include "kpservo/sim_robot.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kpservo/errors.hpp"

namespace kpservo {

void ManipulatorModel::validate() const {
  if (link_lengths.empty()) {
    throw std::invalid_argument("manipulator needs at least one link");
  }
  for (const double l : link_lengths) {
    if (!(l > 0.0)) throw std::invalid_argument("link lengths must be positive");
  }
  if (keypoint_anchors.empty()) {
    throw std::invalid_argument("manipulator needs at least one keypoint anchor");
  }
  for (const auto& a : keypoint_anchors) {
    if (a.link < 0 || a.link >= static_cast<int>(link_lengths.size())) {
      throw std::invalid_argument("keypoint anchor references a missing link");
    }
    if (a.fraction < 0.0 || a.fraction > 1.0) {
      throw std::invalid_argument("keypoint anchor fraction must be in [0,1]");
    }
  }
  if (static_cast<int>(joint_limits.size()) != joint_count()) {
    throw std::invalid_argument("joint_limits size must match joint count");
  }
  for (const auto& [lo, hi] : joint_limits) {
    if (!(lo < hi)) throw std::invalid_argument("joint limit min must be below max");
  }
  if (active_joints.empty()) {
    throw std::invalid_argument("at least one active joint required");
  }
  for (const int j : active_joints) {
    if (j < 0 || j >= joint_count()) {
      throw std::invalid_argument("active joint index out of range");
    }
  }
  const int j_active = static_cast<int>(active_joints.size());
  const int min_keypoints = (j_active + 1) / 2 + 1;  // ceil(J/2) + 1
  if (keypoint_count() < min_keypoints) {
    throw std::invalid_argument("need at least ceil(J/2)+1 keypoints for " +
                                std::to_string(j_active) + " active joints");
  }
}

namespace detail {

std::vector<Eigen::Vector3d> forward_keypoints_unchecked(const ManipulatorModel& model,
                                                         const Eigen::VectorXd& q) {
  const int planar_offset = model.has_spatial_base ? 1 : 0;
  const double yaw = model.has_spatial_base ? q(0) : 0.0;
  const double cy = std::cos(yaw);
  const double sy = std::sin(yaw);

  std::vector<Eigen::Vector3d> out;
  out.reserve(model.keypoint_anchors.size());
  for (const auto& anchor : model.keypoint_anchors) {
    // In-plane coordinates of the anchor: (r, h) with r along the chain's
    // first axis and h the second. Planar mode maps (r, h) to world (x, y)
    // at z = base_height; spatial mode maps r to the yawed horizontal
    // direction and h to world z.
    double r = 0.0;
    double h = 0.0;
    double angle = 0.0;
    for (int j = 0; j < anchor.link; ++j) {
      angle += q(planar_offset + j);
      r += model.link_lengths[j] * std::cos(angle);
      h += model.link_lengths[j] * std::sin(angle);
    }
    angle += q(planar_offset + anchor.link);
    r += anchor.fraction * model.link_lengths[anchor.link] * std::cos(angle);
    h += anchor.fraction * model.link_lengths[anchor.link] * std::sin(angle);

    if (model.has_spatial_base) {
      out.emplace_back(r * cy, r * sy, model.base_height + h);
    } else {
      out.emplace_back(r, h, model.base_height);
    }
  }
  return out;
}

}  // namespace detail

std::vector<Eigen::Vector3d> forward_keypoints(const ManipulatorModel& model,
                                               const JointConfiguration& q) {
  if (q.q.size() != model.joint_count()) {
    throw std::invalid_argument("joint vector size does not match model");
  }
  for (int j = 0; j < model.joint_count(); ++j) {
    const auto& [lo, hi] = model.joint_limits[j];
    if (q.q(j) < lo || q.q(j) > hi) {
      throw LimitViolationError("joint " + std::to_string(j) + " outside limits");
    }
  }
  return detail::forward_keypoints_unchecked(model, q.q);
}

double traversal_velocity(double motion_range, int resolution, double dt, double v_max) {
  if (resolution <= 0) throw std::domain_error("resolution must be positive");
  if (!(dt > 0.0)) throw std::domain_error("dt must be positive");
  if (motion_range < 0.0) throw std::domain_error("motion range must be nonnegative");
  if (v_max < 0.0) throw std::domain_error("v_max must be nonnegative");
  return std::min(motion_range / (resolution * dt), v_max);
}

bool StepResult::any_saturated() const {
  return std::any_of(saturated.begin(), saturated.end(), [](bool s) { return s; });
}

StepResult step(const JointConfiguration& q, const Eigen::VectorXd& q_dot, double dt,
                const ManipulatorModel& model) {
  if (!(dt > 0.0)) throw std::domain_error("dt must be positive");
  if (q.q.size() != model.joint_count() || q_dot.size() != model.joint_count()) {
    throw std::invalid_argument("joint vector size does not match model");
  }
  StepResult result;
  result.q.q = q.q + q_dot * dt;
  result.saturated.assign(model.joint_count(), false);
  for (int j = 0; j < model.joint_count(); ++j) {
    const auto& [lo, hi] = model.joint_limits[j];
    if (result.q.q(j) < lo) {
      result.q.q(j) = lo;
      result.saturated[j] = true;
    } else if (result.q.q(j) > hi) {
      result.q.q(j) = hi;
      result.saturated[j] = true;
    }
  }
  return result;
}

Eigen::MatrixXd oracle_image_jacobian(const ManipulatorModel& model,
                                      const PinholeCamera& camera,
                                      const JointConfiguration& q, double eps) {
  if (!(eps > 0.0)) throw std::domain_error("eps must be positive");
  const int k = model.keypoint_count();
  const int j_active = static_cast<int>(model.active_joints.size());
  Eigen::MatrixXd jac(2 * k, j_active);

  auto project_all = [&](const Eigen::VectorXd& qv) {
    const auto pts = detail::forward_keypoints_unchecked(model, qv);
    Eigen::VectorXd stacked(2 * k);
    for (int i = 0; i < k; ++i) {
      Eigen::Vector2d px;
      try {
        px = project(camera, pts[i]);
      } catch (const BehindCameraError&) {
        throw OracleUnavailableError("keypoint projection failed at perturbed configuration");
      }
      stacked(2 * i) = px.x();
      stacked(2 * i + 1) = px.y();
    }
    return stacked;
  };

  for (int c = 0; c < j_active; ++c) {
    Eigen::VectorXd qp = q.q;
    Eigen::VectorXd qm = q.q;
    qp(model.active_joints[c]) += eps;
    qm(model.active_joints[c]) -= eps;
    jac.col(c) = (project_all(qp) - project_all(qm)) / (2.0 * eps);
  }
  return jac;
}

Eigen::MatrixXd select_feature_rows(const Eigen::MatrixXd& full,
                                    const std::vector<int>& keypoint_indices) {
  Eigen::MatrixXd out(2 * keypoint_indices.size(), full.cols());
  for (std::size_t i = 0; i < keypoint_indices.size(); ++i) {
    const int k = keypoint_indices[i];
    if (2 * k + 1 >= full.rows()) {
      throw std::invalid_argument("keypoint index out of range for Jacobian rows");
    }
    out.row(2 * i) = full.row(2 * k);
    out.row(2 * i + 1) = full.row(2 * k + 1);
  }
  return out;
}

}  // namespace kpservo

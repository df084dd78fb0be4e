#include "kpservo/servo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kpservo/config.hpp"
#include "kpservo/errors.hpp"
#include "kpservo/rng.hpp"

namespace kpservo {

Eigen::VectorXd feature_error(const Eigen::VectorXd& p, const Eigen::VectorXd& p_star) {
  if (p.size() != p_star.size()) {
    throw std::domain_error("feature vector dimensions disagree");
  }
  return p - p_star;
}

VisuoMotorWindow::VisuoMotorWindow(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw std::invalid_argument("window capacity must be positive");
}

void VisuoMotorWindow::push_sample(const Eigen::VectorXd& q_dot, const Eigen::VectorXd& p_dot) {
  if (!q_dot.allFinite() || !p_dot.allFinite()) {
    throw std::domain_error("window samples must be finite");
  }
  if (!samples_.empty() &&
      (samples_.front().q_dot.size() != q_dot.size() ||
       samples_.front().p_dot.size() != p_dot.size())) {
    throw std::domain_error("window sample dimensions disagree");
  }
  samples_.push_back({q_dot, p_dot});
  if (static_cast<int>(samples_.size()) > capacity_) samples_.pop_front();
}

Eigen::MatrixXd VisuoMotorWindow::joint_velocity_stack() const {
  if (samples_.empty()) return {};
  Eigen::MatrixXd out(samples_.size(), samples_.front().q_dot.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) out.row(i) = samples_[i].q_dot.transpose();
  return out;
}

Eigen::MatrixXd VisuoMotorWindow::feature_velocity_stack() const {
  if (samples_.empty()) return {};
  Eigen::MatrixXd out(samples_.size(), samples_.front().p_dot.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) out.row(i) = samples_[i].p_dot.transpose();
  return out;
}

JacobianEstimate jacobian_update(const JacobianEstimate& est, const VisuoMotorWindow& window) {
  if (window.empty()) throw std::domain_error("jacobian update needs at least one sample");

  const Eigen::MatrixXd q_stack = window.joint_velocity_stack();   // n x J
  const Eigen::MatrixXd p_stack = window.feature_velocity_stack();  // n x 2K
  if (est.j_hat.rows() != p_stack.cols() || est.j_hat.cols() != q_stack.cols()) {
    throw std::domain_error("estimate shape does not match window");
  }

  double gamma = est.gamma;
  if (est.mode == GammaMode::normalized) {
    const double smax = q_stack.jacobiSvd().singularValues()(0);
    const double smax_sq = smax * smax;  // sigma_max of Qdot^T Qdot
    if (smax_sq < 1e-12) {
      // No usable excitation in the window; the gradient is numerically
      // zero, so leave the estimate alone instead of dividing by zero.
      JacobianEstimate out = est;
      out.initialized = true;
      return out;
    }
    gamma /= smax_sq;
  }

  // Row-wise descent J_ci <- J_ci - gamma * (Qdot^T (Qdot J_ci^T - Pdot_i))^T,
  // written as one matrix product over all feature rows.
  const Eigen::MatrixXd residual = q_stack * est.j_hat.transpose() - p_stack;  // n x 2K
  JacobianEstimate out = est;
  out.j_hat = est.j_hat - gamma * (q_stack.transpose() * residual).transpose();
  out.initialized = true;
  if (!out.j_hat.allFinite()) {
    throw AdaptationDivergenceError("jacobian estimate became non-finite");
  }
  return out;
}

double window_residual(const JacobianEstimate& est, const VisuoMotorWindow& window) {
  if (window.empty()) return 0.0;
  const Eigen::MatrixXd q_stack = window.joint_velocity_stack();
  const Eigen::MatrixXd p_stack = window.feature_velocity_stack();
  return (q_stack * est.j_hat.transpose() - p_stack).norm();
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double tol) {
  if (!m.allFinite()) throw std::domain_error("pseudo-inverse of non-finite matrix");
  if (m.size() == 0) return m.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = tol * sv(0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

bool ControlCommand::any_clamped() const {
  return std::any_of(clamped.begin(), clamped.end(), [](bool c) { return c; });
}

ControlCommand control_law(const JacobianEstimate& est, const Eigen::VectorXd& e,
                           const ControlGains& gains) {
  if (!est.initialized) throw NotReadyError("jacobian estimate has no update yet");
  if (e.size() != est.j_hat.rows()) {
    throw std::domain_error("error vector does not match estimate rows");
  }

  ControlCommand cmd;
  cmd.q_dot = -gains.lambda * (pseudo_inverse(est.j_hat, gains.pinv_tolerance) * e);
  cmd.clamped.assign(cmd.q_dot.size(), false);
  if (gains.qdot_clamp > 0.0) {
    for (int j = 0; j < cmd.q_dot.size(); ++j) {
      if (cmd.q_dot(j) > gains.qdot_clamp) {
        cmd.q_dot(j) = gains.qdot_clamp;
        cmd.clamped[j] = true;
      } else if (cmd.q_dot(j) < -gains.qdot_clamp) {
        cmd.q_dot(j) = -gains.qdot_clamp;
        cmd.clamped[j] = true;
      }
    }
  }
  return cmd;
}

std::vector<Eigen::VectorXd> excitation_trajectory(int joint_count, double amplitude,
                                                   int steps_per_joint) {
  if (!(amplitude > 0.0)) throw std::domain_error("excitation amplitude must be positive");
  if (joint_count <= 0 || steps_per_joint <= 0) {
    throw std::domain_error("excitation needs positive joint and step counts");
  }
  std::vector<Eigen::VectorXd> commands;
  commands.reserve(2 * joint_count * steps_per_joint);
  for (int j = 0; j < joint_count; ++j) {
    for (const double sign : {1.0, -1.0}) {
      for (int s = 0; s < steps_per_joint; ++s) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(joint_count);
        u(j) = sign * amplitude;
        commands.push_back(u);
      }
    }
  }
  return commands;
}

namespace {

// Gathers active-joint entries of a full joint vector.
Eigen::VectorXd gather_active(const Eigen::VectorXd& q_full, const std::vector<int>& active) {
  Eigen::VectorXd out(active.size());
  for (std::size_t j = 0; j < active.size(); ++j) out(j) = q_full(active[j]);
  return out;
}

Eigen::VectorXd scatter_active(const Eigen::VectorXd& u, const std::vector<int>& active,
                               int full_size) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(full_size);
  for (std::size_t j = 0; j < active.size(); ++j) out(active[j]) = u(j);
  return out;
}

Eigen::VectorXd stack_features(const std::vector<Eigen::Vector2d>& corrected,
                               const std::vector<int>& features) {
  Eigen::VectorXd p(2 * features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    p(2 * i) = corrected[features[i]].x();
    p(2 * i + 1) = corrected[features[i]].y();
  }
  return p;
}

}  // namespace

TrajectoryRecord run_servo_loop(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const ManipulatorModel& model = config.manipulator;
  const PinholeCamera camera = config.camera.build();
  const int j_active = config.active_joint_count();
  const double dt = config.tracker_noise.dt;

  RngStream perception_rng(seed, "perception");
  RngStream scenario_rng(seed, "scenario");

  const auto [start_q, goal_q] = start_goal_pair(config, scenario_rng);

  // Goal features come from projecting the goal configuration exactly.
  const auto goal_points = forward_keypoints(model, {goal_q});
  const auto goal_proj = project_keypoints(camera, goal_points);
  std::vector<Eigen::Vector2d> goal_pixels(goal_proj.size());
  for (std::size_t i = 0; i < goal_proj.size(); ++i) goal_pixels[i] = goal_proj[i].pixel;
  Eigen::VectorXd p_star(config.feature_dim());
  for (std::size_t i = 0; i < config.feature_indices.size(); ++i) {
    p_star.segment<2>(2 * i) = goal_pixels[config.feature_indices[i]];
  }

  TrackerBank bank(model.keypoint_count(), config.tracker_noise, config.sigma_params,
                   config.gate);
  VisuoMotorWindow window(config.servo.window_size);

  JacobianEstimate est;
  est.j_hat = Eigen::MatrixXd::Zero(config.feature_dim(), j_active);
  est.gamma = config.servo.gamma;
  est.mode = config.servo.gamma_mode;
  if (config.servo.jacobian_warm_start == "oracle") {
    const Eigen::MatrixXd full = oracle_image_jacobian(model, camera, {start_q}, 1e-5);
    est.j_hat = select_feature_rows(full, config.feature_indices);
    est.initialized = true;
  }

  const auto excitation = excitation_trajectory(
      j_active, config.servo.excitation_amplitude, config.servo.excitation_steps_per_joint);
  const int excitation_ticks = static_cast<int>(excitation.size());

  TrajectoryRecord record;
  record.scenario_id = config.scenario_name;
  record.seed = seed;
  record.dt = dt;
  record.excitation_ticks = excitation_ticks;
  record.outcome = RunOutcome::budget_exhausted;
  record.ticks.reserve(config.run.step_budget);

  Eigen::VectorXd q_full = start_q;
  Eigen::VectorXd q_prev;
  Eigen::VectorXd p_prev;
  int dwell = 0;

  for (int k = 0; k < config.run.step_budget; ++k) {
    const auto points = forward_keypoints(model, {q_full});
    const auto proj = project_keypoints(camera, points);
    std::vector<Eigen::Vector2d> pixels(proj.size());
    for (std::size_t i = 0; i < proj.size(); ++i) pixels[i] = proj[i].pixel;

    KeypointObservation obs = observe(pixels, config.scenario, k, perception_rng);
    for (std::size_t i = 0; i < proj.size(); ++i) {
      if (!proj[i].in_frustum) {
        obs.keypoints[i].visible = false;
        obs.keypoints[i].u = obs.keypoints[i].v = std::numeric_limits<double>::quiet_NaN();
      }
    }

    CorrectionResult corrected;
    try {
      corrected = bank.process_frame(obs);
    } catch (const FilterDivergenceError&) {
      record.outcome = RunOutcome::filter_divergence;
      break;
    }

    const Eigen::VectorXd p = stack_features(corrected.corrected, config.feature_indices);
    const Eigen::VectorXd e = feature_error(p, p_star);

    if (k > 0) {
      const Eigen::VectorXd q_dot_realized =
          (gather_active(q_full, model.active_joints) - gather_active(q_prev, model.active_joints)) /
          dt;
      window.push_sample(q_dot_realized, (p - p_prev) / dt);
      try {
        est = jacobian_update(est, window);
      } catch (const AdaptationDivergenceError&) {
        record.outcome = RunOutcome::adaptation_divergence;
        break;
      }
    }

    if (k >= excitation_ticks) {
      dwell = (e.norm() < config.servo.success_error_px) ? dwell + 1 : 0;
      if (dwell >= config.servo.success_dwell_ticks) {
        record.success_tick = k;
      }
    }

    Eigen::VectorXd u;
    if (k < excitation_ticks) {
      u = excitation[k];
    } else if (est.initialized) {
      u = control_law(est, e, config.servo.gains()).q_dot;
    } else {
      u = Eigen::VectorXd::Zero(j_active);
    }

    TrajectoryTick tick;
    tick.t = k * dt;
    tick.err_norm = e.norm();
    tick.e = e;
    tick.q = gather_active(q_full, model.active_joints);
    tick.q_dot_cmd = u;
    tick.status = corrected.status;
    tick.jac_residual = window_residual(est, window);
    record.ticks.push_back(std::move(tick));

    if (record.success_tick) {
      record.outcome = RunOutcome::success;
      break;
    }

    q_prev = q_full;
    p_prev = p;
    q_full = step({q_full}, scatter_active(u, model.active_joints, model.joint_count()), dt,
                  model)
                 .q.q;
  }
  return record;
}

}  // namespace kpservo

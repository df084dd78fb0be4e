#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <vector>

#include "kpservo/trajectory.hpp"

namespace kpservo {

struct ExperimentConfig;

// e = p - p*. Throws std::domain_error on dimension mismatch.
Eigen::VectorXd feature_error(const Eigen::VectorXd& p, const Eigen::VectorXd& p_star);

// Sliding window of paired joint-velocity / feature-velocity samples.
class VisuoMotorWindow {
 public:
  explicit VisuoMotorWindow(int capacity);

  void push_sample(const Eigen::VectorXd& q_dot, const Eigen::VectorXd& p_dot);

  int size() const { return static_cast<int>(samples_.size()); }
  int capacity() const { return capacity_; }
  bool empty() const { return samples_.empty(); }

  // Row k holds the k-th oldest sample.
  Eigen::MatrixXd joint_velocity_stack() const;    // size x J
  Eigen::MatrixXd feature_velocity_stack() const;  // size x 2K

 private:
  struct Sample {
    Eigen::VectorXd q_dot;
    Eigen::VectorXd p_dot;
  };
  int capacity_;
  std::deque<Sample> samples_;
};

enum class GammaMode { normalized, fixed };

// Online combined hand-eye Jacobian estimate. In normalized mode the
// adaptation gain is gamma / sigma_max(Qdot^T Qdot) per update, which keeps
// every step inside the residual-descent region regardless of window
// scaling; fixed mode applies gamma as-is.
struct JacobianEstimate {
  Eigen::MatrixXd j_hat;  // 2K x J, pixels per radian
  double gamma = 0.5;
  GammaMode mode = GammaMode::normalized;
  bool initialized = false;
};

// One least-squares descent step per feature row over the current window.
// Throws AdaptationDivergenceError if the result is not finite.
JacobianEstimate jacobian_update(const JacobianEstimate& est, const VisuoMotorWindow& window);

// ||Qdot J^T - Pdot||_F of the window under the given estimate.
double window_residual(const JacobianEstimate& est, const VisuoMotorWindow& window);

// SVD-based Moore-Penrose pseudo-inverse; singular values below
// tol * sigma_max are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double tol);

struct ControlGains {
  double lambda = 0.8;          // 1/s
  double pinv_tolerance = 1e-2;  // relative singular-value cutoff
  double qdot_clamp = 0.5;       // rad/s per joint; <= 0 disables the clamp
};

struct ControlCommand {
  Eigen::VectorXd q_dot;
  std::vector<bool> clamped;
  bool any_clamped() const;
};

// q_dot = -lambda * pinv(J_hat) * e, with the per-joint clamp applied
// afterward. Throws NotReadyError on an estimate with no update yet.
ControlCommand control_law(const JacobianEstimate& est, const Eigen::VectorXd& e,
                           const ControlGains& gains);

// Square-pulse excitation: each joint in turn gets +amplitude for
// steps_per_joint ticks then -amplitude for steps_per_joint ticks, so the
// stacked command matrix has full column rank and the net displacement is
// zero.
std::vector<Eigen::VectorXd> excitation_trajectory(int joint_count, double amplitude,
                                                   int steps_per_joint);

// Full adaptive servo run: excitation, then per-tick observe -> tracker ->
// feature error -> Jacobian update -> control until the error norm stays
// under the success threshold for the dwell period or the budget runs out.
// Filter/adaptation divergence is recorded as a failed outcome, not thrown.
TrajectoryRecord run_servo_loop(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace kpservo

#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "kpservo/perception.hpp"

namespace kpservo {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector4d = Eigen::Matrix<double, 4, 1>;
using Matrix4d = Eigen::Matrix<double, 4, 4>;

// Per-keypoint filter state over [x, y, vx, vy, ax, ay] in pixels, px/s,
// px/s^2.
struct TrackerState {
  Vector6d mean = Vector6d::Zero();
  Matrix6d covariance = Matrix6d::Zero();
};

// Filter noise parameters. Defaults follow the constant-acceleration
// tracker this module implements: P0 = diag(50,50,30,30,10,10),
// Q = diag(0.2,0.2,1,1,0.2,0.2), R = diag(0.1,0.1,30,30), dt = 0.1 s to
// match the 10 Hz control loop. Scenario configs may override R to match
// their detector noise.
struct NoiseConfig {
  std::array<double, 6> p0_diag{50.0, 50.0, 30.0, 30.0, 10.0, 10.0};
  std::array<double, 6> q_diag{0.2, 0.2, 1.0, 1.0, 0.2, 0.2};
  std::array<double, 4> r_diag{0.1, 0.1, 30.0, 30.0};
  double dt = 0.1;

  Matrix6d initial_covariance() const;
  Matrix6d process_noise() const;
  Matrix4d measurement_noise() const;
  void validate() const;
};

// Merwe scaled sigma-point parameters; defaults are the standard
// Gaussian-optimal choices.
struct SigmaParams {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;

  double lambda(int n) const { return alpha * alpha * (n + kappa) - n; }
};

struct GatePolicy {
  double distance_threshold = 30.0;  // pixels
};

struct SigmaPointSet {
  Eigen::Matrix<double, 6, 13> points;   // column 0 is the mean
  Eigen::Matrix<double, 13, 1> mean_weights;
  Eigen::Matrix<double, 13, 1> cov_weights;
};

// 2n+1 = 13 sigma points for the 6-dimensional state. The matrix square
// root is a symmetric eigendecomposition with negative eigenvalues clipped
// at zero; a 1e-9 jitter retry precedes the FilterDivergenceError path.
SigmaPointSet merwe_sigma_points(const Vector6d& mean, const Matrix6d& cov,
                                 const SigmaParams& params);

// Constant-acceleration transition over dt.
Vector6d process_model(const Vector6d& state, double dt);

// Direct observation of position and velocity: [x, y, vx, vy].
Vector4d measurement_model(const Vector6d& state);

TrackerState ukf_predict(const TrackerState& tracker, const NoiseConfig& noise,
                         const SigmaParams& params);
TrackerState ukf_update(const TrackerState& tracker, const Vector4d& z,
                        const NoiseConfig& noise, const SigmaParams& params);

// Closed-form linear recursions with the identical F, H, Q, R; the baseline
// row of the filter comparison.
TrackerState kf_predict(const TrackerState& tracker, const NoiseConfig& noise);
TrackerState kf_update(const TrackerState& tracker, const Vector4d& z,
                       const NoiseConfig& noise);

// Finite-difference pixel velocity between consecutive frames.
Eigen::Vector2d estimate_velocity(const Eigen::Vector2d& prev, const Eigen::Vector2d& cur,
                                  double dt);

enum class KeypointStatus { measured, substituted, gated };

enum class FilterKind { ukf, kf };

struct CorrectionResult {
  // Refined keypoint positions (filter means after the update); these are
  // what downstream feature vectors consume.
  std::vector<Eigen::Vector2d> corrected;
  // The measurement each tracker was updated with, possibly substituted.
  std::vector<Vector4d> applied_measurements;
  std::vector<KeypointStatus> status;
  bool fully_occluded = false;
};

// Correction policy for one frame. Trackers must already be predicted.
// Missing keypoints take the predicted position with velocity borrowed from
// the nearest visible keypoint; visible detections farther than the gate
// from their prediction are treated as outliers and substituted the same
// way. Every tracker receives exactly one update.
CorrectionResult correct_observations(std::vector<TrackerState>& trackers,
                                      const KeypointObservation& obs,
                                      const std::vector<Eigen::Vector2d>& prev_corrected,
                                      const NoiseConfig& noise, const SigmaParams& params,
                                      const GatePolicy& gate,
                                      FilterKind kind = FilterKind::ukf);

// Convenience wrapper owning one tracker per keypoint plus the previous
// corrected positions. Initialization happens on the first frame: visible
// keypoints start at their measurement, missing ones at the mean of the
// visible positions (flagged low-confidence).
class TrackerBank {
 public:
  TrackerBank(int keypoint_count, NoiseConfig noise, SigmaParams params, GatePolicy gate,
              FilterKind kind = FilterKind::ukf);

  bool initialized() const { return initialized_; }
  // Predict + correct for one frame (plain initialization on the first).
  CorrectionResult process_frame(const KeypointObservation& obs);

  const std::vector<TrackerState>& trackers() const { return trackers_; }
  const std::vector<bool>& low_confidence() const { return low_confidence_; }

 private:
  CorrectionResult initialize(const KeypointObservation& obs);

  std::vector<TrackerState> trackers_;
  std::vector<Eigen::Vector2d> prev_corrected_;
  std::vector<bool> low_confidence_;
  NoiseConfig noise_;
  SigmaParams params_;
  GatePolicy gate_;
  FilterKind kind_;
  bool initialized_ = false;
};

}  // namespace kpservo

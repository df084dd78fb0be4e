#include "kpservo/tracker.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "kpservo/errors.hpp"

namespace kpservo {

namespace {

constexpr int kN = 6;
constexpr int kNumSigma = 2 * kN + 1;

Matrix6d transition_matrix(double dt) {
  Matrix6d f = Matrix6d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  f(0, 4) = 0.5 * dt * dt;
  f(1, 5) = 0.5 * dt * dt;
  f(2, 4) = dt;
  f(3, 5) = dt;
  return f;
}

Eigen::Matrix<double, 4, 6> observation_matrix() {
  Eigen::Matrix<double, 4, 6> h = Eigen::Matrix<double, 4, 6>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  h(2, 2) = 1.0;
  h(3, 3) = 1.0;
  return h;
}

Matrix6d symmetrize(const Matrix6d& m) { return 0.5 * (m + m.transpose()); }

// Symmetric square root with eigenvalue clipping; jitter retry before
// giving up.
Matrix6d matrix_sqrt_psd(const Matrix6d& m) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> solver(symmetrize(m));
  if (solver.info() != Eigen::Success) {
    solver.compute(symmetrize(m) + 1e-9 * Matrix6d::Identity());
    if (solver.info() != Eigen::Success) {
      throw FilterDivergenceError("covariance square root failed after regularization");
    }
  }
  const Vector6d clipped = solver.eigenvalues().cwiseMax(0.0);
  return solver.eigenvectors() * clipped.cwiseSqrt().asDiagonal() *
         solver.eigenvectors().transpose();
}

void check_finite(const TrackerState& s, const char* where) {
  if (!s.mean.allFinite() || !s.covariance.allFinite()) {
    throw FilterDivergenceError(std::string("non-finite filter state in ") + where);
  }
}

}  // namespace

Matrix6d NoiseConfig::initial_covariance() const {
  Matrix6d p = Matrix6d::Zero();
  for (int i = 0; i < 6; ++i) p(i, i) = p0_diag[i];
  return p;
}

Matrix6d NoiseConfig::process_noise() const {
  Matrix6d q = Matrix6d::Zero();
  for (int i = 0; i < 6; ++i) q(i, i) = q_diag[i];
  return q;
}

Matrix4d NoiseConfig::measurement_noise() const {
  Matrix4d r = Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) r(i, i) = r_diag[i];
  return r;
}

void NoiseConfig::validate() const {
  for (const double v : p0_diag) {
    if (v < 0.0) throw std::invalid_argument("p0_diag entries must be nonnegative");
  }
  for (const double v : q_diag) {
    if (v < 0.0) throw std::invalid_argument("q_diag entries must be nonnegative");
  }
  for (const double v : r_diag) {
    if (v < 0.0) throw std::invalid_argument("r_diag entries must be nonnegative");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("tracker dt must be positive");
}

SigmaPointSet merwe_sigma_points(const Vector6d& mean, const Matrix6d& cov,
                                 const SigmaParams& params) {
  const double lambda = params.lambda(kN);
  const double scale = kN + lambda;

  SigmaPointSet set;
  const Matrix6d root = matrix_sqrt_psd(scale * cov);
  set.points.col(0) = mean;
  for (int i = 0; i < kN; ++i) {
    set.points.col(1 + i) = mean + root.col(i);
    set.points.col(1 + kN + i) = mean - root.col(i);
  }

  const double w_rest = 0.5 / scale;
  set.mean_weights.setConstant(w_rest);
  set.cov_weights.setConstant(w_rest);
  set.mean_weights(0) = lambda / scale;
  set.cov_weights(0) = lambda / scale + (1.0 - params.alpha * params.alpha + params.beta);
  return set;
}

Vector6d process_model(const Vector6d& state, double dt) {
  if (dt < 0.0) throw std::domain_error("dt must be nonnegative");
  Vector6d next;
  next(0) = state(0) + state(2) * dt + 0.5 * state(4) * dt * dt;
  next(1) = state(1) + state(3) * dt + 0.5 * state(5) * dt * dt;
  next(2) = state(2) + state(4) * dt;
  next(3) = state(3) + state(5) * dt;
  next(4) = state(4);
  next(5) = state(5);
  return next;
}

Vector4d measurement_model(const Vector6d& state) { return state.head<4>(); }

TrackerState ukf_predict(const TrackerState& tracker, const NoiseConfig& noise,
                         const SigmaParams& params) {
  const SigmaPointSet set = merwe_sigma_points(tracker.mean, tracker.covariance, params);

  Eigen::Matrix<double, kN, kNumSigma> propagated;
  for (int i = 0; i < kNumSigma; ++i) {
    propagated.col(i) = process_model(set.points.col(i), noise.dt);
  }

  TrackerState out;
  out.mean = propagated * set.mean_weights;
  Matrix6d cov = noise.process_noise();
  for (int i = 0; i < kNumSigma; ++i) {
    const Vector6d d = propagated.col(i) - out.mean;
    cov += set.cov_weights(i) * d * d.transpose();
  }
  out.covariance = symmetrize(cov);
  check_finite(out, "ukf_predict");
  return out;
}

TrackerState ukf_update(const TrackerState& tracker, const Vector4d& z,
                        const NoiseConfig& noise, const SigmaParams& params) {
  if (!z.allFinite()) throw std::domain_error("measurement must be finite");

  const SigmaPointSet set = merwe_sigma_points(tracker.mean, tracker.covariance, params);

  Eigen::Matrix<double, 4, kNumSigma> z_points;
  for (int i = 0; i < kNumSigma; ++i) {
    z_points.col(i) = measurement_model(set.points.col(i));
  }
  const Vector4d z_pred = z_points * set.mean_weights;

  Matrix4d s = noise.measurement_noise();
  Eigen::Matrix<double, 6, 4> cross = Eigen::Matrix<double, 6, 4>::Zero();
  for (int i = 0; i < kNumSigma; ++i) {
    const Vector4d dz = z_points.col(i) - z_pred;
    const Vector6d dx = set.points.col(i) - tracker.mean;
    s += set.cov_weights(i) * dz * dz.transpose();
    cross += set.cov_weights(i) * dx * dz.transpose();
  }

  Eigen::FullPivLU<Matrix4d> lu(s);
  if (!lu.isInvertible()) {
    lu.compute(s + 1e-9 * Matrix4d::Identity());
    if (!lu.isInvertible()) {
      throw FilterDivergenceError("innovation covariance not invertible");
    }
  }
  const Eigen::Matrix<double, 6, 4> gain = cross * lu.inverse();

  TrackerState out;
  out.mean = tracker.mean + gain * (z - z_pred);
  out.covariance = symmetrize(tracker.covariance - gain * s * gain.transpose());
  check_finite(out, "ukf_update");
  return out;
}

TrackerState kf_predict(const TrackerState& tracker, const NoiseConfig& noise) {
  const Matrix6d f = transition_matrix(noise.dt);
  TrackerState out;
  out.mean = f * tracker.mean;
  out.covariance = symmetrize(f * tracker.covariance * f.transpose() + noise.process_noise());
  check_finite(out, "kf_predict");
  return out;
}

TrackerState kf_update(const TrackerState& tracker, const Vector4d& z,
                       const NoiseConfig& noise) {
  if (!z.allFinite()) throw std::domain_error("measurement must be finite");
  const Eigen::Matrix<double, 4, 6> h = observation_matrix();
  const Matrix4d s = h * tracker.covariance * h.transpose() + noise.measurement_noise();

  Eigen::FullPivLU<Matrix4d> lu(s);
  if (!lu.isInvertible()) {
    throw FilterDivergenceError("innovation covariance not invertible");
  }
  const Eigen::Matrix<double, 6, 4> gain = tracker.covariance * h.transpose() * lu.inverse();

  TrackerState out;
  out.mean = tracker.mean + gain * (z - h * tracker.mean);
  const Matrix6d ikh = Matrix6d::Identity() - gain * h;
  // Joseph form keeps the posterior covariance symmetric PSD.
  out.covariance = symmetrize(ikh * tracker.covariance * ikh.transpose() +
                              gain * noise.measurement_noise() * gain.transpose());
  check_finite(out, "kf_update");
  return out;
}

Eigen::Vector2d estimate_velocity(const Eigen::Vector2d& prev, const Eigen::Vector2d& cur,
                                  double dt) {
  if (!(dt > 0.0)) throw std::domain_error("dt must be positive");
  return (cur - prev) / dt;
}

CorrectionResult correct_observations(std::vector<TrackerState>& trackers,
                                      const KeypointObservation& obs,
                                      const std::vector<Eigen::Vector2d>& prev_corrected,
                                      const NoiseConfig& noise, const SigmaParams& params,
                                      const GatePolicy& gate, FilterKind kind) {
  const int k = static_cast<int>(trackers.size());
  if (static_cast<int>(obs.keypoints.size()) != k ||
      static_cast<int>(prev_corrected.size()) != k) {
    throw std::domain_error("observation/tracker/previous sizes disagree");
  }

  // Consistent snapshot of the predicted means for nearest-neighbor search
  // and velocity borrowing, taken before any update runs.
  std::vector<Eigen::Vector2d> pred_pos(k);
  std::vector<Eigen::Vector2d> pred_vel(k);
  for (int i = 0; i < k; ++i) {
    pred_pos[i] = trackers[i].mean.head<2>();
    pred_vel[i] = trackers[i].mean.segment<2>(2);
  }

  // A keypoint counts as measured when it is visible and its displacement
  // from the prediction stays inside the gate; only measured keypoints act
  // as velocity donors.
  std::vector<bool> measured(k, false);
  int n_visible = 0;
  for (int i = 0; i < k; ++i) {
    const auto& kp = obs.keypoints[i];
    if (!kp.visible) continue;
    ++n_visible;
    const Eigen::Vector2d z(kp.u, kp.v);
    if ((z - pred_pos[i]).norm() <= gate.distance_threshold) measured[i] = true;
  }

  CorrectionResult result;
  result.corrected.resize(k);
  result.applied_measurements.resize(k);
  result.status.resize(k);
  result.fully_occluded = (n_visible == 0);

  for (int i = 0; i < k; ++i) {
    Vector4d z;
    if (measured[i]) {
      const Eigen::Vector2d cur(obs.keypoints[i].u, obs.keypoints[i].v);
      const Eigen::Vector2d vel = estimate_velocity(prev_corrected[i], cur, noise.dt);
      z << cur.x(), cur.y(), vel.x(), vel.y();
      result.status[i] = KeypointStatus::measured;
    } else {
      Eigen::Vector2d borrowed = Eigen::Vector2d::Zero();
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        if (!measured[j]) continue;
        const double d = (pred_pos[j] - pred_pos[i]).norm();
        if (d < best) {
          best = d;
          borrowed = pred_vel[j];
        }
      }
      z << pred_pos[i].x(), pred_pos[i].y(), borrowed.x(), borrowed.y();
      result.status[i] =
          obs.keypoints[i].visible ? KeypointStatus::gated : KeypointStatus::substituted;
    }
    result.applied_measurements[i] = z;
  }

  for (int i = 0; i < k; ++i) {
    trackers[i] = (kind == FilterKind::ukf)
                      ? ukf_update(trackers[i], result.applied_measurements[i], noise, params)
                      : kf_update(trackers[i], result.applied_measurements[i], noise);
    result.corrected[i] = trackers[i].mean.head<2>();
  }
  return result;
}

TrackerBank::TrackerBank(int keypoint_count, NoiseConfig noise, SigmaParams params,
                         GatePolicy gate, FilterKind kind)
    : trackers_(keypoint_count),
      prev_corrected_(keypoint_count, Eigen::Vector2d::Zero()),
      low_confidence_(keypoint_count, false),
      noise_(std::move(noise)),
      params_(params),
      gate_(gate),
      kind_(kind) {
  noise_.validate();
}

CorrectionResult TrackerBank::initialize(const KeypointObservation& obs) {
  const int k = static_cast<int>(trackers_.size());
  if (static_cast<int>(obs.keypoints.size()) != k) {
    throw std::domain_error("observation size does not match tracker bank");
  }

  Eigen::Vector2d fallback = Eigen::Vector2d::Zero();
  int n_visible = 0;
  for (const auto& kp : obs.keypoints) {
    if (kp.visible) {
      fallback += Eigen::Vector2d(kp.u, kp.v);
      ++n_visible;
    }
  }
  if (n_visible > 0) fallback /= n_visible;

  CorrectionResult result;
  result.corrected.resize(k);
  result.applied_measurements.resize(k);
  result.status.resize(k);
  result.fully_occluded = (n_visible == 0);

  for (int i = 0; i < k; ++i) {
    const auto& kp = obs.keypoints[i];
    const Eigen::Vector2d pos = kp.visible ? Eigen::Vector2d(kp.u, kp.v) : fallback;
    trackers_[i].mean.setZero();
    trackers_[i].mean.head<2>() = pos;
    trackers_[i].covariance = noise_.initial_covariance();
    low_confidence_[i] = !kp.visible;
    result.corrected[i] = pos;
    result.applied_measurements[i] << pos.x(), pos.y(), 0.0, 0.0;
    result.status[i] = kp.visible ? KeypointStatus::measured : KeypointStatus::substituted;
  }
  prev_corrected_ = result.corrected;
  initialized_ = true;
  return result;
}

CorrectionResult TrackerBank::process_frame(const KeypointObservation& obs) {
  if (!initialized_) return initialize(obs);
  for (auto& t : trackers_) {
    t = (kind_ == FilterKind::ukf) ? ukf_predict(t, noise_, params_) : kf_predict(t, noise_);
  }
  CorrectionResult result =
      correct_observations(trackers_, obs, prev_corrected_, noise_, params_, gate_, kind_);
  prev_corrected_ = result.corrected;
  return result;
}

}  // namespace kpservo

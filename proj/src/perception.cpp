#include "kpservo/perception.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace kpservo {

void OcclusionScenario::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(dropout_prob_occluded) || !prob(outlier_prob)) {
    throw std::invalid_argument("scenario probabilities must lie in [0,1]");
  }
  if (noise_sigma < 0.0) {
    throw std::invalid_argument("noise_sigma must be nonnegative");
  }
  if (outlier_offset_min < 0.0 || outlier_offset_max < outlier_offset_min) {
    throw std::invalid_argument("outlier offset range is invalid");
  }
  for (const auto& r : occluders) {
    if (r.x_max < r.x_min || r.y_max < r.y_min) {
      throw std::invalid_argument("occluder rectangle is inverted");
    }
  }
}

KeypointObservation observe(const std::vector<Eigen::Vector2d>& true_pixels,
                            const OcclusionScenario& scenario, int frame,
                            RngStream& rng) {
  KeypointObservation obs;
  obs.frame_index = frame;
  obs.keypoints.reserve(true_pixels.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (const auto& p : true_pixels) {
    // Fixed draw budget per keypoint keeps paired scenarios seed-aligned.
    const double u_drop = rng.uniform();
    const double n1 = rng.gaussian();
    const double n2 = rng.gaussian();
    const double u_out = rng.uniform();
    const double mag_u = rng.uniform();
    const double ang_u = rng.uniform();

    bool occluded = false;
    for (const auto& r : scenario.occluders) {
      if (r.contains(p.x(), p.y(), frame)) {
        occluded = true;
        break;
      }
    }

    Keypoint kp;
    if (occluded && u_drop < scenario.effective_dropout_prob()) {
      kp.u = nan;
      kp.v = nan;
      kp.visible = false;
    } else {
      kp.u = p.x() + scenario.noise_sigma * n1;
      kp.v = p.y() + scenario.noise_sigma * n2;
      kp.visible = true;
      if (u_out < scenario.effective_outlier_prob()) {
        const double mag = scenario.outlier_offset_min +
                           mag_u * (scenario.outlier_offset_max - scenario.outlier_offset_min);
        const double ang = 2.0 * std::numbers::pi * ang_u;
        kp.u += mag * std::cos(ang);
        kp.v += mag * std::sin(ang);
      }
    }
    obs.keypoints.push_back(kp);
  }
  return obs;
}

namespace {

nlohmann::json keypoints_field(const KeypointObservation& obs,
                               const std::vector<Eigen::Vector2d>& last_known) {
  if (last_known.size() != obs.keypoints.size()) {
    throw std::domain_error("last_known size must match keypoint count");
  }
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < obs.keypoints.size(); ++i) {
    const auto& kp = obs.keypoints[i];
    const double x = kp.visible ? kp.u : last_known[i].x();
    const double y = kp.visible ? kp.v : last_known[i].y();
    arr.push_back({x, y, kp.visible ? 1 : 0});
  }
  return arr;
}

}  // namespace

nlohmann::json export_annotations(const KeypointObservation& obs, double bb_size,
                                  const std::vector<Eigen::Vector2d>& last_known) {
  if (!(bb_size > 0.0)) throw std::domain_error("bb_size must be positive");
  nlohmann::json doc;
  doc["keypoints"] = keypoints_field(obs, last_known);
  nlohmann::json boxes = nlohmann::json::array();
  for (std::size_t i = 0; i < obs.keypoints.size(); ++i) {
    const auto& kp = obs.keypoints[i];
    const double x = kp.visible ? kp.u : last_known[i].x();
    const double y = kp.visible ? kp.v : last_known[i].y();
    boxes.push_back({x - bb_size / 2.0, y - bb_size / 2.0,
                     x + bb_size / 2.0, y + bb_size / 2.0});
  }
  doc["bboxes"] = boxes;
  return doc;
}

nlohmann::json export_annotations(const KeypointObservation& obs,
                                  const std::vector<std::array<Eigen::Vector2d, 4>>& corners,
                                  const std::vector<Eigen::Vector2d>& last_known) {
  if (corners.size() != obs.keypoints.size()) {
    throw std::domain_error("corner rectangles must match keypoint count");
  }
  nlohmann::json doc;
  doc["keypoints"] = keypoints_field(obs, last_known);
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& quad : corners) {
    double x_min = quad[0].x(), x_max = quad[0].x();
    double y_min = quad[0].y(), y_max = quad[0].y();
    for (const auto& c : quad) {
      x_min = std::min(x_min, c.x());
      x_max = std::max(x_max, c.x());
      y_min = std::min(y_min, c.y());
      y_max = std::max(y_max, c.y());
    }
    boxes.push_back({x_min, y_min, x_max, y_max});
  }
  doc["bboxes"] = boxes;
  return doc;
}

ParsedAnnotations parse_annotations(const nlohmann::json& doc) {
  ParsedAnnotations out;
  for (const auto& entry : doc.at("keypoints")) {
    out.keypoints.emplace_back(entry.at(0).get<double>(), entry.at(1).get<double>());
    out.visibility.push_back(entry.at(2).get<int>());
  }
  for (const auto& entry : doc.at("bboxes")) {
    out.bboxes.emplace_back(entry.at(0).get<double>(), entry.at(1).get<double>(),
                            entry.at(2).get<double>(), entry.at(3).get<double>());
  }
  return out;
}

}  // namespace kpservo

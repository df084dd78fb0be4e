#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include <json.hpp>

#include "kpservo/rng.hpp"

namespace kpservo {

struct Keypoint {
  double u = 0.0;
  double v = 0.0;
  bool visible = false;  // invisible entries carry NaN coordinates
};

struct KeypointObservation {
  int frame_index = 0;
  std::vector<Keypoint> keypoints;  // exactly K entries every frame
};

// Axis-aligned screen rectangle, optionally drifting at a constant pixel
// velocity per frame.
struct OccluderRect {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  double vel_u = 0.0, vel_v = 0.0;  // pixels per frame

  bool contains(double u, double v, int frame) const {
    const double du = vel_u * frame;
    const double dv = vel_v * frame;
    return u >= x_min + du && u <= x_max + du && v >= y_min + dv && v <= y_max + dv;
  }
};

// Configurable stand-in for the neural detection stack: occlusion-driven
// dropouts, pixel noise and outlier displacements. inpainting_on scales the
// dropout and outlier probabilities by kInpaintingReliefFactor, reproducing
// the direction of the paper's inpainting-vs-filtering comparison without
// claiming the neural model's exact rates.
struct OcclusionScenario {
  std::vector<OccluderRect> occluders;
  double noise_sigma = 1.0;            // pixels, per axis
  double dropout_prob_occluded = 0.9;  // applies inside occluders only
  double outlier_prob = 0.0;
  double outlier_offset_min = 40.0;    // pixels
  double outlier_offset_max = 80.0;
  bool inpainting_on = false;

  static constexpr double kInpaintingReliefFactor = 0.2;

  double effective_dropout_prob() const {
    return dropout_prob_occluded * (inpainting_on ? kInpaintingReliefFactor : 1.0);
  }
  double effective_outlier_prob() const {
    return outlier_prob * (inpainting_on ? kInpaintingReliefFactor : 1.0);
  }

  void validate() const;
};

// Simulates one detector frame over the true pixel positions. Per keypoint,
// in order: occluder dropout, isotropic Gaussian noise, outlier
// displacement. Draws a fixed number of variates per keypoint regardless of
// branch outcomes, so runs that differ only in probabilities (e.g.
// inpainting on/off) see identical random fields.
KeypointObservation observe(const std::vector<Eigen::Vector2d>& true_pixels,
                            const OcclusionScenario& scenario, int frame,
                            RngStream& rng);

// Annotation documents in the dataset JSON schema: `keypoints` entries are
// [x, y, v] and `bboxes` entries are [a, b, c, d]. Invisible keypoints are
// recorded with v = 0 at their last known position, which also anchors the
// box (format convention; the source format leaves this case open).

// Planar flavor: a fixed square box of side bb_size centered on each keypoint.
nlohmann::json export_annotations(const KeypointObservation& obs, double bb_size,
                                  const std::vector<Eigen::Vector2d>& last_known);

// Spatial flavor: the tight axis-aligned hull of per-keypoint marker corners.
nlohmann::json export_annotations(const KeypointObservation& obs,
                                  const std::vector<std::array<Eigen::Vector2d, 4>>& corners,
                                  const std::vector<Eigen::Vector2d>& last_known);

struct ParsedAnnotations {
  std::vector<Eigen::Vector2d> keypoints;
  std::vector<int> visibility;
  std::vector<Eigen::Vector4d> bboxes;
};

ParsedAnnotations parse_annotations(const nlohmann::json& doc);

}  // namespace kpservo

#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kpservo {

// Fixed eye-to-hand pinhole camera. The pose maps world points into the
// camera frame (p_cam = rotation * p_world + translation), with the usual
// vision convention: x right, y down, z forward along the optical axis.
struct PinholeCamera {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 240.0;
  double cy = 240.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int image_width = 480;
  int image_height = 480;

  // Throws std::invalid_argument if intrinsics or image size are
  // non-positive or the rotation is not orthonormal with det +1 (1e-9).
  void validate() const;
};

// Builds a camera at `position` whose optical axis points at `target`.
// `up_hint` picks the image orientation: its projection onto the image
// plane points toward -v (image up).
PinholeCamera make_look_at_camera(double fx, double fy, double cx, double cy,
                                  int width, int height,
                                  const Eigen::Vector3d& position,
                                  const Eigen::Vector3d& target,
                                  const Eigen::Vector3d& up_hint);

// Projects a world point to pixel coordinates. The result may lie outside
// the image bounds. Throws BehindCameraError if the camera-frame depth is
// not strictly positive.
Eigen::Vector2d project(const PinholeCamera& camera, const Eigen::Vector3d& point);

struct ProjectedKeypoint {
  Eigen::Vector2d pixel;  // NaN when the point is behind the camera
  bool in_frustum = false;
};

// Per-point projection with visibility flags instead of exceptions.
// in_frustum is true iff depth > 0 and the pixel is inside image bounds.
std::vector<ProjectedKeypoint> project_keypoints(const PinholeCamera& camera,
                                                 const std::vector<Eigen::Vector3d>& points);

}  // namespace kpservo

#include "kpservo/sim_camera.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "kpservo/errors.hpp"

namespace kpservo {

void PinholeCamera::validate() const {
  if (fx <= 0.0 || fy <= 0.0) {
    throw std::invalid_argument("camera focal lengths must be positive");
  }
  if (image_width <= 0 || image_height <= 0) {
    throw std::invalid_argument("camera image size must be positive");
  }
  const Eigen::Matrix3d rtr = rotation.transpose() * rotation;
  if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("camera rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("camera rotation determinant is not +1");
  }
}

PinholeCamera make_look_at_camera(double fx, double fy, double cx, double cy,
                                  int width, int height,
                                  const Eigen::Vector3d& position,
                                  const Eigen::Vector3d& target,
                                  const Eigen::Vector3d& up_hint) {
  const Eigen::Vector3d forward = (target - position).normalized();
  Eigen::Vector3d right = forward.cross(up_hint);
  if (right.norm() < 1e-12) {
    throw std::invalid_argument("look-at up_hint is parallel to the optical axis");
  }
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);  // image +v direction

  PinholeCamera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.image_width = width;
  cam.image_height = height;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * position;
  cam.validate();
  return cam;
}

Eigen::Vector2d project(const PinholeCamera& camera, const Eigen::Vector3d& point) {
  const Eigen::Vector3d pc = camera.rotation * point + camera.translation;
  if (!(pc.z() > 0.0)) {
    throw BehindCameraError("point depth is not positive");
  }
  return {camera.fx * pc.x() / pc.z() + camera.cx,
          camera.fy * pc.y() / pc.z() + camera.cy};
}

std::vector<ProjectedKeypoint> project_keypoints(const PinholeCamera& camera,
                                                 const std::vector<Eigen::Vector3d>& points) {
  std::vector<ProjectedKeypoint> out;
  out.reserve(points.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : points) {
    const Eigen::Vector3d pc = camera.rotation * p + camera.translation;
    ProjectedKeypoint pk;
    if (pc.z() > 0.0) {
      pk.pixel = {camera.fx * pc.x() / pc.z() + camera.cx,
                  camera.fy * pc.y() / pc.z() + camera.cy};
      pk.in_frustum = pk.pixel.x() >= 0.0 && pk.pixel.x() <= camera.image_width &&
                      pk.pixel.y() >= 0.0 && pk.pixel.y() <= camera.image_height;
    } else {
      pk.pixel = {nan, nan};
      pk.in_frustum = false;
    }
    out.push_back(pk);
  }
  return out;
}

}  // namespace kpservo

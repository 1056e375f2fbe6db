#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "ocumap/imaging.hpp"

namespace ocumap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Calibrated pinhole camera.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  // Throws DomainError unless fx, fy > 0 and the image size is positive.
  void validate() const;

  // Soft check only: a principal point outside the image is legal (cropped
  // regions of interest), callers may warn about it.
  bool principal_point_inside() const {
    return cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
  }

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;

  // Same camera on an image resampled by `factor` (pixel-center convention).
  Intrinsics scaled(double factor) const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// Six-parameter rigid motion acting on column vectors, p' = R p + t, with
// R = Rz(rz) * Ry(ry) * Rx(rx): rotate about x first, then y, then z.
struct Pose6DoF {
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;

  static Pose6DoF identity() { return {}; }

  Vec3 translation() const { return {tx, ty, tz}; }
  Mat3 rotation() const;
  Vec3 apply(const Vec3& p) const { return rotation() * p + translation(); }

  std::array<double, 6> to_array() const { return {tx, ty, tz, rx, ry, rz}; }
  static Pose6DoF from_array(const std::array<double, 6>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }

  friend bool operator==(const Pose6DoF&, const Pose6DoF&) = default;
};

Mat3 euler_to_rotation(double rx, double ry, double rz);

Mat4 pose_to_matrix(const Pose6DoF& pose);

// Recovers the Euler triple with ry in [-pi/2, pi/2]. At gimbal lock
// (|cos ry| ~ 0) rz is set to zero and the remaining angle goes to rx.
Pose6DoF matrix_to_pose(const Mat4& transform);

// matrix(compose(a, b)) == matrix(a) * matrix(b): b is applied first.
Pose6DoF compose(const Pose6DoF& a, const Pose6DoF& b);
Pose6DoF invert(const Pose6DoF& pose);

// Rotation angle of the relative rotation between two poses, in radians.
double rotation_distance(const Pose6DoF& a, const Pose6DoF& b);
double translation_distance(const Pose6DoF& a, const Pose6DoF& b);

// Pixel + depth -> camera-frame point. Throws DomainError for depth <= 0.
Vec3 backproject(const Vec2& pixel, double depth, const Intrinsics& k);

// Camera-frame point -> pixel. Throws DomainError for z <= 0.
Vec2 project(const Vec3& point, const Intrinsics& k);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec2> source_pixels;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void push_back(const Vec3& point, const Vec2& pixel) {
    points.push_back(point);
    source_pixels.push_back(pixel);
  }
};

// One point per pixel selected by `mask` (all pixels when omitted).
// Selected depths must be positive; an empty selection yields an empty cloud.
PointCloud depth_to_cloud(const DepthMap& depth, const Intrinsics& k);
PointCloud depth_to_cloud(const DepthMap& depth, const Intrinsics& k, const PixelMask& mask);

}  // namespace ocumap

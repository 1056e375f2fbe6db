#include "ocumap/camera.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "ocumap/errors.hpp"

namespace ocumap {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("intrinsics: fx and fy must be positive");
  if (width <= 0 || height <= 0) throw DomainError("intrinsics: image size must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw DomainError("intrinsics: principal point must be finite");
  }
}

Mat3 Intrinsics::matrix() const {
  Mat3 m;
  m << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return m;
}

Mat3 Intrinsics::inverse_matrix() const {
  Mat3 m;
  m << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return m;
}

Intrinsics Intrinsics::scaled(double factor) const {
  Intrinsics out = *this;
  out.fx = fx * factor;
  out.fy = fy * factor;
  out.cx = (cx + 0.5) * factor - 0.5;
  out.cy = (cy + 0.5) * factor - 0.5;
  out.width = static_cast<int>(std::lround(width * factor));
  out.height = static_cast<int>(std::lround(height * factor));
  return out;
}

Mat3 euler_to_rotation(double rx, double ry, double rz) {
  const Eigen::AngleAxisd ax(rx, Vec3::UnitX());
  const Eigen::AngleAxisd ay(ry, Vec3::UnitY());
  const Eigen::AngleAxisd az(rz, Vec3::UnitZ());
  return (az * ay * ax).toRotationMatrix();
}

Mat3 Pose6DoF::rotation() const { return euler_to_rotation(rx, ry, rz); }

Mat4 pose_to_matrix(const Pose6DoF& pose) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = pose.rotation();
  m.topRightCorner<3, 1>() = pose.translation();
  return m;
}

Pose6DoF matrix_to_pose(const Mat4& transform) {
  const Mat3 r = transform.topLeftCorner<3, 3>();
  Pose6DoF p;
  p.tx = transform(0, 3);
  p.ty = transform(1, 3);
  p.tz = transform(2, 3);
  // R = Rz Ry Rx  =>  R(2,0) = -sin(ry), R(2,1) = cos(ry) sin(rx),
  // R(2,2) = cos(ry) cos(rx), R(1,0) = sin(rz) cos(ry), R(0,0) = cos(rz) cos(ry).
  const double cos_ry = std::hypot(r(0, 0), r(1, 0));
  p.ry = std::atan2(-r(2, 0), cos_ry);
  if (cos_ry > 1e-12) {
    p.rx = std::atan2(r(2, 1), r(2, 2));
    p.rz = std::atan2(r(1, 0), r(0, 0));
  } else {
    p.rz = 0.0;
    p.rx = std::atan2(-r(1, 2), r(1, 1));
  }
  return p;
}

Pose6DoF compose(const Pose6DoF& a, const Pose6DoF& b) {
  return matrix_to_pose(pose_to_matrix(a) * pose_to_matrix(b));
}

Pose6DoF invert(const Pose6DoF& pose) {
  const Mat3 rt = pose.rotation().transpose();
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * pose.translation();
  return matrix_to_pose(m);
}

double rotation_distance(const Pose6DoF& a, const Pose6DoF& b) {
  const Mat3 rel = a.rotation().transpose() * b.rotation();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  // acos loses precision near zero; use the antisymmetric part there.
  const Vec3 axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(axis.norm() / 2.0, c);
}

double translation_distance(const Pose6DoF& a, const Pose6DoF& b) {
  return (a.translation() - b.translation()).norm();
}

Vec3 backproject(const Vec2& pixel, double depth, const Intrinsics& k) {
  if (!(depth > 0.0)) {
    throw DomainError("backproject: depth must be positive, got " + std::to_string(depth));
  }
  return {(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
}

Vec2 project(const Vec3& point, const Intrinsics& k) {
  if (!(point.z() > 0.0)) {
    throw DomainError("project: point is behind the camera (z = " + std::to_string(point.z()) +
                      ")");
  }
  return {k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy};
}

PointCloud depth_to_cloud(const DepthMap& depth, const Intrinsics& k) {
  return depth_to_cloud(depth, k, PixelMask(depth.width(), depth.height(), true));
}

PointCloud depth_to_cloud(const DepthMap& depth, const Intrinsics& k, const PixelMask& mask) {
  if (!mask.matches(depth)) throw DomainError("depth_to_cloud: mask size differs from depth");
  PointCloud cloud;
  cloud.points.reserve(mask.count());
  cloud.source_pixels.reserve(mask.count());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!mask(x, y)) continue;
      const Vec2 pixel(x, y);
      cloud.push_back(backproject(pixel, depth(x, y), k), pixel);
    }
  }
  return cloud;
}

}  // namespace ocumap

#include "ocumap/spherefit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ocumap/errors.hpp"

namespace ocumap {

SphereParams fit_sphere(std::span<const Vec3> points) {
  const std::size_t n = points.size();
  if (n < 4) {
    throw InsufficientDataError("fit_sphere: need at least 4 points, got " + std::to_string(n));
  }

  // Normalize: subtract the centroid and divide by the RMS spread so the
  // 4x4 system stays well scaled for clouds far from the origin.
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : points) mean += p;
  mean /= static_cast<double>(n);
  double spread = 0.0;
  for (const Vec3& p : points) spread += (p - mean).squaredNorm();
  spread = std::sqrt(spread / static_cast<double>(n));
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw DegenerateGeometryError("fit_sphere: all points coincide");
  }
  const double inv_spread = 1.0 / spread;

  Eigen::Matrix4d normal = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  for (const Vec3& p : points) {
    const Vec3 q = (p - mean) * inv_spread;
    const Eigen::Vector4d row(2.0 * q.x(), 2.0 * q.y(), 2.0 * q.z(), 1.0);
    normal.noalias() += row * row.transpose();
    rhs.noalias() += row * q.squaredNorm();
  }

  Eigen::Vector4d c;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(normal, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0);
  const double lmax = eig.eigenvalues()(3);
  if (lmax > 0.0 && lmin / lmax > 1e-10) {
    c = normal.ldlt().solve(rhs);
  } else {
    // Ill-conditioned normal equations: solve the tall system directly with a
    // rank-revealing QR.
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 4);
    Eigen::VectorXd f(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 q = (points[i] - mean) * inv_spread;
      a.row(static_cast<Eigen::Index>(i)) << 2.0 * q.x(), 2.0 * q.y(), 2.0 * q.z(), 1.0;
      f(static_cast<Eigen::Index>(i)) = q.squaredNorm();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-9);
    if (qr.rank() < 4) {
      throw DegenerateGeometryError("fit_sphere: points are coplanar or collinear (rank " +
                                    std::to_string(qr.rank()) + ")");
    }
    c = qr.solve(f);
  }

  const Vec3 center_n = c.head<3>();
  const double r2 = c(3) + center_n.squaredNorm();
  if (!(r2 > 0.0) || !std::isfinite(r2)) {
    throw DegenerateGeometryError("fit_sphere: non-positive squared radius");
  }

  SphereParams s;
  const Vec3 center = mean + spread * center_n;
  s.x0 = center.x();
  s.y0 = center.y();
  s.z0 = center.z();
  s.r = spread * std::sqrt(r2);
  s.rms_residual = std::sqrt(sphere_mse(points, s));
  return s;
}

double sphere_mse(std::span<const Vec3> points, const SphereParams& sphere) {
  if (points.empty()) return 0.0;
  const Vec3 center = sphere.center();
  double sum = 0.0;
  for (const Vec3& p : points) {
    const double e = (p - center).norm() - sphere.r;
    sum += e * e;
  }
  return sum / static_cast<double>(points.size());
}

PointCloud region_cloud(const DepthMap& depth, const SegMap& seg, const Intrinsics& k,
                        Label label) {
  if (seg.width() != depth.width() || seg.height() != depth.height()) {
    throw DomainError("region_cloud: segmap size differs from depth");
  }
  return depth_to_cloud(depth, k, label_mask(seg, label));
}

namespace {

// Near intersection of the ray s * d with a sphere, or the closest approach
// when the ray misses.
double ray_sphere_depth(const Vec3& d, const SphereParams& sphere) {
  const Vec3 c = sphere.center();
  const double a = d.squaredNorm();
  const double dc = d.dot(c);
  const double disc = dc * dc - a * (c.squaredNorm() - sphere.r * sphere.r);
  if (disc <= 0.0) return dc / a;
  return (dc - std::sqrt(disc)) / a;
}

}  // namespace

DepthMap sphere_depth(const EyeSpheres& spheres, const SegMap& seg, const Intrinsics& k) {
  DepthMap depth(seg.width(), seg.height());
  for (int y = 0; y < seg.height(); ++y) {
    for (int x = 0; x < seg.width(); ++x) {
      const Vec3 d((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      double z = 0.0;
      switch (seg(x, y)) {
        case Label::cornea:
          z = ray_sphere_depth(d, spheres.cornea);
          break;
        case Label::sclera:
          z = ray_sphere_depth(d, spheres.sclera);
          break;
        case Label::eyelid:
          z = std::min(ray_sphere_depth(d, spheres.cornea), ray_sphere_depth(d, spheres.sclera));
          break;
      }
      depth(x, y) = z;
    }
  }
  return depth;
}

double region_presence(const SegMap& seg, Label label) {
  if (seg.pixel_count() == 0) return 0.0;
  return static_cast<double>(seg.count(label)) / static_cast<double>(seg.pixel_count());
}

}  // namespace ocumap

#include "ocumap/warp.hpp"

#include <cmath>

#include "ocumap/errors.hpp"

namespace ocumap {
namespace {

// Pulls coordinates that miss the border by round-off back onto it.
double snap_to_range(double u, double hi) {
  constexpr double kTolerance = 1e-9;
  if (u < 0.0 && u > -kTolerance) return 0.0;
  if (u > hi && u < hi + kTolerance) return hi;
  return u;
}

}  // namespace

WarpResult inverse_warp(const Image& source, const DepthMap& target_depth, const Pose6DoF& pose,
                        const Intrinsics& k, const PixelMask& exclude) {
  if (!exclude.matches(target_depth)) {
    throw DomainError("inverse_warp: exclusion mask size differs from target depth");
  }
  const int w = target_depth.width();
  const int h = target_depth.height();
  const int channels = source.channels();
  WarpResult result{Image(w, h, channels, 0.0), PixelMask(w, h, false)};

  const Mat3 r = pose.rotation();
  const Vec3 t = pose.translation();
  const double inv_fx = 1.0 / k.fx;
  const double inv_fy = 1.0 / k.fy;

  for (int y = 0; y < h; ++y) {
    const double ray_y = (y - k.cy) * inv_fy;
    for (int x = 0; x < w; ++x) {
      if (!exclude(x, y)) continue;
      const double d = target_depth(x, y);
      if (!(d > 0.0)) continue;
      const Vec3 p(((x - k.cx) * inv_fx) * d, ray_y * d, d);
      const Vec3 q = r * p + t;
      if (!(q.z() > 0.0)) continue;
      const double u = snap_to_range(k.fx * q.x() / q.z() + k.cx, source.width() - 1.0);
      const double v = snap_to_range(k.fy * q.y() / q.z() + k.cy, source.height() - 1.0);
      std::span<double> out(result.warped.pixel(x, y), static_cast<std::size_t>(channels));
      if (bilinear_sample(source, u, v, out)) result.valid.set(x, y, true);
    }
  }
  return result;
}

WarpResult inverse_warp(const Image& source, const DepthMap& target_depth, const Pose6DoF& pose,
                        const Intrinsics& k) {
  return inverse_warp(source, target_depth, pose, k,
                      PixelMask(target_depth.width(), target_depth.height(), true));
}

TrackedPoint track_point(const Vec2& target_pixel, double depth, const Pose6DoF& pose,
                         const Intrinsics& k) {
  TrackedPoint out;
  if (!(depth > 0.0) || !std::isfinite(depth)) return out;
  const Vec3 q = pose.apply(backproject(target_pixel, depth, k));
  if (!(q.z() > 0.0)) return out;
  out.pixel = project(q, k);
  out.valid = out.pixel.allFinite();
  return out;
}

std::vector<TrackedPoint> track_points(std::span<const Vec2> target_points,
                                       const DepthMap& target_depth, const Pose6DoF& pose,
                                       const Intrinsics& k) {
  std::vector<TrackedPoint> out;
  out.reserve(target_points.size());
  for (const Vec2& p : target_points) {
    bool inside = false;
    const double d = bilinear_sample(target_depth, p.x(), p.y(), &inside);
    out.push_back(inside ? track_point(p, d, pose, k) : TrackedPoint{});
  }
  return out;
}

}  // namespace ocumap

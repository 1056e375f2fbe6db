#pragma once

// Straightforward per-pixel loop versions of the losses and the warp, used as
// oracles for the optimized implementations.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "ocumap/camera.hpp"
#include "ocumap/imaging.hpp"
#include "ocumap/losses.hpp"

namespace ocumap::naive {

inline bool sample(const Image& im, double u, double v, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(im.channels()), 0.0);
  const int w = im.width(), h = im.height();
  if (!(u >= 0 && v >= 0 && u <= w - 1 && v <= h - 1)) return false;
  int x0 = static_cast<int>(std::floor(u));
  int y0 = static_cast<int>(std::floor(v));
  if (x0 > w - 2) x0 = w - 2;
  if (y0 > h - 2) y0 = h - 2;
  const double fx = u - x0, fy = v - y0;
  for (int c = 0; c < im.channels(); ++c) {
    out[c] = (1 - fx) * (1 - fy) * im.at(x0, y0, c) + fx * (1 - fy) * im.at(x0 + 1, y0, c) +
             (1 - fx) * fy * im.at(x0, y0 + 1, c) + fx * fy * im.at(x0 + 1, y0 + 1, c);
  }
  return true;
}

struct Warped {
  Image image;
  PixelMask valid;
};

inline Warped warp(const Image& source, const DepthMap& depth, const Pose6DoF& pose,
                   const Intrinsics& k, const PixelMask& allowed) {
  const int w = depth.width(), h = depth.height();
  Warped out{Image(w, h, source.channels(), 0.0), PixelMask(w, h, false)};
  const Mat3 r = pose.rotation();
  std::vector<double> px;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!allowed(x, y) || !(depth(x, y) > 0)) continue;
      const double d = depth(x, y);
      const Vec3 p((x - k.cx) / k.fx * d, (y - k.cy) / k.fy * d, d);
      const Vec3 q = r * p + pose.translation();
      if (!(q.z() > 0)) continue;
      const double u = k.fx * q.x() / q.z() + k.cx, v = k.fy * q.y() / q.z() + k.cy;
      if (!sample(source, u, v, px)) continue;
      out.valid.set(x, y, true);
      for (int c = 0; c < source.channels(); ++c) out.image.at(x, y, c) = px[c];
    }
  return out;
}

inline double srl_at(const Image& warped, const SegMap& target, int x, int y, int offset = 0) {
  double e = 0;
  for (int c = 0; c < 3; ++c) {
    const double t = static_cast<int>(target(x, y)) == c ? 1.0 : 0.0;
    e += (warped.at(x, y, offset + c) - t) * (warped.at(x, y, offset + c) - t);
  }
  return e;
}

inline double recon_at(const Image& warped, const Frame& target, int x, int y) {
  double e = 0;
  for (int c = 0; c < 3; ++c) e += std::abs(warped.at(x, y, c) - target.at(x, y, c));
  return e / 3.0;
}

inline double srl(const Image& warped, const SegMap& target, const PixelMask& valid) {
  double sum = 0;
  int n = 0;
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x)
      if (valid(x, y)) {
        sum += srl_at(warped, target, x, y);
        ++n;
      }
  return n ? sum / n : 0.0;
}

inline double recon(const Image& warped, const Frame& target, const PixelMask& valid) {
  double sum = 0;
  int n = 0;
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x)
      if (valid(x, y)) {
        sum += recon_at(warped, target, x, y);
        ++n;
      }
  return n ? sum / n : 0.0;
}

// Returns the loss and the number of fully valid windows. Only the first
// three channels of `a` are compared.
inline std::pair<double, int> ssim(const Image& a, const Frame& b, const PixelMask& valid) {
  const double l1 = 0.01 * 0.01, l2 = 0.03 * 0.03;
  double sum = 0;
  int windows = 0;
  for (int y = 1; y + 1 < b.height(); ++y)
    for (int x = 1; x + 1 < b.width(); ++x) {
      bool ok = true;
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i) ok = ok && valid(x + i, y + j);
      if (!ok) continue;
      ++windows;
      for (int c = 0; c < 3; ++c) {
        double ma = 0, mb = 0;
        for (int j = -1; j <= 1; ++j)
          for (int i = -1; i <= 1; ++i) {
            ma += a.at(x + i, y + j, c) / 9.0;
            mb += b.at(x + i, y + j, c) / 9.0;
          }
        double va = 0, vb = 0, cov = 0;
        for (int j = -1; j <= 1; ++j)
          for (int i = -1; i <= 1; ++i) {
            const double da = a.at(x + i, y + j, c) - ma, db = b.at(x + i, y + j, c) - mb;
            va += da * da / 9.0;
            vb += db * db / 9.0;
            cov += da * db / 9.0;
          }
        sum += (2 * ma * mb + l1) * (2 * cov + l2) / ((ma * ma + mb * mb + l1) * (va + vb + l2));
      }
    }
  return {windows ? 1.0 - sum / (3.0 * windows) : 0.0, windows};
}

inline double ds(const DepthMap& d, const Frame& im, const PixelMask& valid) {
  double sum = 0;
  int n = 0;
  const int w = d.width(), h = d.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!valid(x, y)) continue;
      ++n;
      if (x + 1 < w && valid(x + 1, y)) {
        double g = 0;
        for (int c = 0; c < 3; ++c) g += std::abs(im.at(x + 1, y, c) - im.at(x, y, c));
        sum += std::abs(d(x + 1, y) - d(x, y)) * std::exp(-g / 3.0);
      }
      if (y + 1 < h && valid(x, y + 1)) {
        double g = 0;
        for (int c = 0; c < 3; ++c) g += std::abs(im.at(x, y + 1, c) - im.at(x, y, c));
        sum += std::abs(d(x, y + 1) - d(x, y)) * std::exp(-g / 3.0);
      }
    }
  return n ? sum / n : 0.0;
}

// Sphere-fit MSE of one region; NaN when the region is skipped.
inline double sfl_region(const DepthMap& d, const SegMap& seg, const Intrinsics& k, Label label,
                         double threshold) {
  std::vector<Vec3> pts;
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x)
      if (seg(x, y) == label) {
        const double z = d(x, y);
        pts.emplace_back((x - k.cx) / k.fx * z, (y - k.cy) / k.fy * z, z);
      }
  const double presence = static_cast<double>(pts.size()) / (d.width() * d.height());
  if (!(presence > threshold) || pts.size() < 4) return std::numeric_limits<double>::quiet_NaN();
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd a(pts.size(), 4);
  Eigen::VectorXd f(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 q = pts[i] - mean;
    a.row(i) << 2 * q.x(), 2 * q.y(), 2 * q.z(), 1.0;
    f(i) = q.squaredNorm();
  }
  const Eigen::Vector4d c = a.colPivHouseholderQr().solve(f);
  const Vec3 center = mean + c.head<3>();
  const double r = std::sqrt(c(3) + c.head<3>().squaredNorm());
  double mse = 0;
  for (const Vec3& p : pts) mse += std::pow((p - center).norm() - r, 2);
  return mse / pts.size();
}

}  // namespace ocumap::naive

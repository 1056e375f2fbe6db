#pragma once

#include <cstdint>
#include <random>

#include "ocumap/camera.hpp"
#include "ocumap/imaging.hpp"

namespace ocumap::testing {

inline Image random_image(std::mt19937_64& rng, int w, int h, int c, double lo = 0.0,
                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image im(w, h, c);
  for (double& v : im.data()) v = u(rng);
  return im;
}

inline Frame random_frame(std::mt19937_64& rng, int w, int h) {
  return Frame(random_image(rng, w, h, 3));
}

inline DepthMap random_depth(std::mt19937_64& rng, int w, int h, double lo = 30.0,
                             double hi = 60.0) {
  return DepthMap(random_image(rng, w, h, 1, lo, hi));
}

inline SegMap random_seg(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> u(0, 2);
  SegMap seg(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) seg.set(x, y, static_cast<Label>(u(rng)));
  return seg;
}

inline PixelMask random_mask(std::mt19937_64& rng, int w, int h, double p_true = 0.8) {
  std::bernoulli_distribution b(p_true);
  PixelMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, b(rng));
  return m;
}

inline Pose6DoF random_pose(std::mt19937_64& rng, double max_t, double max_r) {
  std::uniform_real_distribution<double> t(-max_t, max_t), r(-max_r, max_r);
  return {t(rng), t(rng), t(rng), r(rng), r(rng), r(rng)};
}

inline Intrinsics simple_intrinsics(int w, int h, double f = 100.0) {
  Intrinsics k;
  k.fx = f;
  k.fy = f;
  k.cx = (w - 1) / 2.0;
  k.cy = (h - 1) / 2.0;
  k.width = w;
  k.height = h;
  return k;
}

}  // namespace ocumap::testing

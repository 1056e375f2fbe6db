#pragma once

#include <span>
#include <vector>

#include "ocumap/camera.hpp"
#include "ocumap/imaging.hpp"

namespace ocumap {

struct WarpResult {
  // Source raster resampled into target geometry. Zero where `valid` is false.
  Image warped;
  // In-bounds, positive transformed depth, and allowed by the exclusion mask.
  PixelMask valid;
};

// Inverse warp. For every target pixel p_t with exclude(p_t) true:
//   X = backproject(p_t, target_depth(p_t));  X' = pose.apply(X);
//   p_s = project(X');  warped(p_t) = bilinear(source, p_s).
// `pose` maps target-camera coordinates into source-camera coordinates.
// Pixels with non-positive depth, X'.z <= 0 or p_s outside the source are
// left invalid.
WarpResult inverse_warp(const Image& source, const DepthMap& target_depth, const Pose6DoF& pose,
                        const Intrinsics& k, const PixelMask& exclude);

// Overload that allows every pixel.
WarpResult inverse_warp(const Image& source, const DepthMap& target_depth, const Pose6DoF& pose,
                        const Intrinsics& k);

struct TrackedPoint {
  Vec2 pixel{0.0, 0.0};
  bool valid = false;
};

// Same chain as inverse_warp applied to individual target-frame locations.
// Depth is bilinearly sampled at each (u, v).
std::vector<TrackedPoint> track_points(std::span<const Vec2> target_points,
                                       const DepthMap& target_depth, const Pose6DoF& pose,
                                       const Intrinsics& k);

// Single-point form with an explicit depth; invalid for depth <= 0, points that
// end up behind the source camera, or non-finite results.
TrackedPoint track_point(const Vec2& target_pixel, double depth, const Pose6DoF& pose,
                         const Intrinsics& k);

}  // namespace ocumap

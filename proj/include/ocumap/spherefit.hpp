#pragma once

#include <span>

#include "ocumap/camera.hpp"
#include "ocumap/imaging.hpp"

namespace ocumap {

struct SphereParams {
  double x0 = 0.0;
  double y0 = 0.0;
  double z0 = 0.0;
  double r = 0.0;
  double rms_residual = 0.0;

  Vec3 center() const { return {x0, y0, z0}; }
};

// Scleral and corneal spheres in one camera frame.
struct EyeSpheres {
  SphereParams sclera;
  SphereParams cornea;
};

// Depth along each pixel ray to the sphere of its label: cornea pixels use the
// corneal sphere, sclera pixels the scleral sphere, eyelid pixels whichever
// is nearer. Rays that miss their sphere take the depth of closest approach,
// which keeps the map continuous at the silhouette.
DepthMap sphere_depth(const EyeSpheres& spheres, const SegMap& seg, const Intrinsics& k);

// Algebraic least-squares sphere fit. Each point contributes the row
//   [2x 2y 2z 1] c = x^2 + y^2 + z^2,
// c = (x0, y0, z0, r^2 - |center|^2). Points are mean-centred before solving.
//
// Throws InsufficientDataError for fewer than 4 points and
// DegenerateGeometryError for coplanar/collinear input or an imaginary radius.
SphereParams fit_sphere(std::span<const Vec3> points);
inline SphereParams fit_sphere(const PointCloud& cloud) { return fit_sphere(cloud.points); }

// Mean of (|p - center| - r)^2 over the points.
double sphere_mse(std::span<const Vec3> points, const SphereParams& sphere);

// Depth pixels carrying `label`, back-projected into the camera frame.
PointCloud region_cloud(const DepthMap& depth, const SegMap& seg, const Intrinsics& k, Label label);

// Fraction of all frame pixels that carry `label`.
double region_presence(const SegMap& seg, Label label);

}  // namespace ocumap

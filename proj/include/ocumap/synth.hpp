#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocumap/camera.hpp"
#include "ocumap/imaging.hpp"
#include "ocumap/spherefit.hpp"

namespace ocumap {

// World frame of the eye model: the sclera centre sits at the origin, the
// anterior direction is -z and image "up" is -y.

struct PunctateDot {
  Vec3 point;            // on the surface, world frame (mm)
  double radius = 0.2;   // mm
  Label region = Label::sclera;
};

// A vein is the circle cut from the sclera sphere by the plane n . (p - c) = offset.
struct Vein {
  Vec3 normal{1.0, 0.0, 0.0};
  double offset = 0.0;
};

// Upper-lid occluder: surface points with y < edge_y + amplitude * sin(frequency * x + phase)
// are covered by the lid.
struct EyelidBand {
  double edge_y = -6.0;
  double amplitude = 0.8;
  double frequency = 0.45;
  double phase = 0.3;

  bool covers(const Vec3& world_point) const;
};

struct EyeModel {
  Vec3 sclera_center{0.0, 0.0, 0.0};
  double sclera_radius = 12.0;
  Vec3 cornea_center{0.0, 0.0, -5.0};
  double cornea_radius = 7.8;
  std::uint64_t texture_seed = 1;
  std::vector<PunctateDot> punctate_dots;
  std::vector<Vein> veins;
  double vein_width = 0.3;  // mm
  EyelidBand eyelid;

  // Throws DomainError unless cornea_radius < sclera_radius and the spheres intersect.
  void validate() const;

  // Default geometry with dots and veins drawn from `seed`.
  static EyeModel make_default(std::uint64_t seed = 1);
};

// Point light; intensity falls off as (reference_distance / d)^2.
struct Light {
  // true: the light sits at the camera centre and moves with it.
  // false: the light stays at `world_position`.
  bool camera_attached = true;
  Vec3 world_position{0.0, 0.0, -50.0};
  double ambient = 0.25;
  double diffuse = 0.85;
  double reference_distance = 40.0;
  // Wet-surface highlights.
  double sclera_specular = 0.5;
  double sclera_shininess = 8.0;
  double cornea_specular = 1.0;
  double cornea_shininess = 20.0;
};

struct RenderOptions {
  Light light;
  // Colour is averaged over supersamples x supersamples rays per pixel; depth
  // and labels always come from the pixel-centre ray.
  int supersamples = 2;
};

struct SceneSample {
  Frame frame;
  DepthMap depth;
  SegMap seg;
  Pose6DoF pose;   // camera-from-world
  Image surface;   // world-frame surface point per pixel (3 channels)
  PixelMask hit;   // pixel ray hit one of the spheres

  std::optional<Vec3> world_point(int x, int y) const;
};

// Camera looking down +z at the eye from `distance` mm.
Pose6DoF default_camera_pose(double distance = 50.0);

// 128x96 pinhole camera used by the synthetic experiments.
Intrinsics default_synthetic_intrinsics(int width = 128, int height = 96);

// Ray-casts every pixel against the two-sphere model. Throws DomainError when
// the camera centre lies inside either sphere.
SceneSample render(const EyeModel& model, const Pose6DoF& camera_from_world, const Intrinsics& k,
                   const RenderOptions& options = {});

// Requires at least two poses.
std::vector<SceneSample> make_sequence(const EyeModel& model,
                                       std::span<const Pose6DoF> trajectory, const Intrinsics& k,
                                       const RenderOptions& options = {});

// Relative motion target -> source between two rendered samples, i.e. the
// pose that inverse_warp expects.
Pose6DoF relative_pose(const SceneSample& target, const SceneSample& source);

// Smooth eye motion sampled at `fps`: rotation about the eye centre at
// `angular_speed` deg/s around a slowly turning axis plus a head drift of
// `drift_speed` mm/s. Deterministic for a fixed seed.
std::vector<Pose6DoF> video_trajectory(int frames, double fps, double angular_speed,
                                       double drift_speed, std::uint64_t seed,
                                       const Pose6DoF& base = default_camera_pose());

// Named surface landmarks: punctate dots and vein crossings on visible,
// non-eyelid surface.
struct Landmark {
  std::string id;
  Vec3 point;
  Label region = Label::sclera;
};

std::vector<Landmark> landmarks(const EyeModel& model);

// Pixel at which `world_point` is seen from `camera_from_world`, or nothing
// when it is outside the image, occluded or under the eyelid.
std::optional<Vec2> observe(const EyeModel& model, const Pose6DoF& camera_from_world,
                            const Intrinsics& k, const Vec3& world_point);

// The scleral and corneal spheres expressed in a camera frame.
EyeSpheres spheres_in_camera(const EyeModel& model, const Pose6DoF& camera_from_world);

}  // namespace ocumap

#include "ocumap/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "ocumap/errors.hpp"

namespace ocumap {
namespace {

using std::numbers::pi;

enum class Surface { none, sclera, cornea };

struct Hit {
  Surface surface = Surface::none;
  double s = 0.0;  // ray parameter; equals camera-frame depth for z-normalized rays
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

// Smallest positive root of |o + s d - c|^2 = r^2, if any.
std::optional<double> intersect_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double a = d.squaredNorm();
  const double b = 2.0 * d.dot(oc);
  const double cc = oc.squaredNorm() - r * r;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double q = -0.5 * (b + std::copysign(sq, b));
  double s0 = q / a;
  double s1 = q != 0.0 ? cc / q : s0;
  if (s0 > s1) std::swap(s0, s1);
  if (s0 > 0.0) return s0;
  if (s1 > 0.0) return s1;
  return std::nullopt;
}

Hit trace(const EyeModel& model, const Vec3& origin, const Vec3& dir) {
  Hit hit;
  const auto sc = intersect_sphere(origin, dir, model.sclera_center, model.sclera_radius);
  const auto cn = intersect_sphere(origin, dir, model.cornea_center, model.cornea_radius);
  if (cn && (!sc || *cn < *sc)) {
    hit.surface = Surface::cornea;
    hit.s = *cn;
    hit.point = origin + hit.s * dir;
    hit.normal = (hit.point - model.cornea_center) / model.cornea_radius;
  } else if (sc) {
    hit.surface = Surface::sclera;
    hit.s = *sc;
    hit.point = origin + hit.s * dir;
    hit.normal = (hit.point - model.sclera_center) / model.sclera_radius;
  }
  return hit;
}

// Band-limited procedural variation anchored to the surface.
struct TextureBank {
  struct Wave {
    Vec3 k;
    double phase;
    double amplitude;
  };
  std::vector<Wave> sclera;
  std::vector<Wave> skin;
  std::vector<double> vein_strength;

  TextureBank(const EyeModel& model) {
    std::mt19937_64 rng(model.texture_seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto make_waves = [&](int count, double min_wavelength, double max_wavelength) {
      std::vector<Wave> waves;
      for (int i = 0; i < count; ++i) {
        Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
        dir.normalize();
        const double wavelength = min_wavelength + (max_wavelength - min_wavelength) * unit(rng);
        waves.push_back({dir * (2.0 * pi / wavelength), 2.0 * pi * unit(rng), 1.0 / count});
      }
      return waves;
    };
    sclera = make_waves(10, 0.9, 3.5);
    skin = make_waves(6, 0.6, 2.0);
    for (std::size_t i = 0; i < model.veins.size(); ++i) vein_strength.push_back(0.55 + 0.35 * unit(rng));
  }

  static double eval(const std::vector<Wave>& waves, const Vec3& p) {
    double v = 0.0;
    for (const Wave& w : waves) v += w.amplitude * std::sin(w.k.dot(p) + w.phase);
    return v;
  }
};

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Vec3 mix(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

Vec3 sclera_albedo(const EyeModel& model, const TextureBank& tex, const Vec3& p) {
  Vec3 albedo = Vec3(0.93, 0.88, 0.84) * (1.0 + 0.18 * TextureBank::eval(tex.sclera, p));
  const Vec3 q = p - model.sclera_center;
  const Vec3 vein_color(0.62, 0.16, 0.15);
  for (std::size_t i = 0; i < model.veins.size(); ++i) {
    const double dist = std::abs(model.veins[i].normal.dot(q) - model.veins[i].offset);
    const double v = std::exp(-(dist * dist) / (model.vein_width * model.vein_width));
    albedo = mix(albedo, vein_color, v * tex.vein_strength[i]);
  }
  return albedo;
}

Vec3 cornea_albedo(const EyeModel& model, const Vec3& p) {
  Vec3 axis = model.cornea_center - model.sclera_center;
  if (axis.norm() < 1e-12) axis = Vec3(0.0, 0.0, -1.0);
  axis.normalize();
  const Vec3 q = p - model.cornea_center;
  const Vec3 radial = q - q.dot(axis) * axis;
  const double rho = radial.norm();
  // Any basis orthogonal to the axis works for the azimuth.
  const Vec3 e1 = axis.unitOrthogonal();
  const Vec3 e2 = axis.cross(e1);
  const double phi = std::atan2(radial.dot(e2), radial.dot(e1));

  const double stripes = 0.5 + 0.5 * std::sin(17.0 * phi + 1.7 * std::sin(3.0 * rho));
  const double rings = 0.5 + 0.5 * std::sin(3.1 * rho + 0.8 * std::sin(5.0 * phi));
  Vec3 iris = Vec3(0.36, 0.46, 0.58) * (0.62 + 0.25 * stripes + 0.18 * rings);
  const double limbus = smoothstep(3.9, 5.1, rho);
  iris = mix(iris, Vec3(0.18, 0.2, 0.24), 0.6 * limbus);
  const double pupil = 1.0 - smoothstep(1.2, 1.8, rho);
  return mix(iris, Vec3(0.07, 0.06, 0.06), pupil);
}

Vec3 skin_albedo(const EyeModel& model, const TextureBank& tex, const Vec3& p) {
  Vec3 albedo = Vec3(0.78, 0.58, 0.5) * (1.0 + 0.12 * TextureBank::eval(tex.skin, p));
  const EyelidBand& lid = model.eyelid;
  const double edge = lid.edge_y + lid.amplitude * std::sin(lid.frequency * p.x() + lid.phase);
  const double lash = 1.0 - smoothstep(0.0, 0.6, edge - p.y());
  return mix(albedo, Vec3(0.16, 0.1, 0.09), 0.8 * lash);
}

Vec3 shade(const EyeModel& model, const TextureBank& tex, const Light& light, const Hit& hit,
           const Vec3& camera_center) {
  Vec3 albedo;
  double ks = 0.0;
  double shininess = 1.0;
  const bool lid = model.eyelid.covers(hit.point);
  if (hit.surface == Surface::none) {
    return Vec3(0.3, 0.22, 0.2);
  } else if (lid) {
    albedo = skin_albedo(model, tex, hit.point);
    ks = 0.05;
    shininess = 8.0;
  } else if (hit.surface == Surface::cornea) {
    albedo = cornea_albedo(model, hit.point);
    ks = light.cornea_specular;
    shininess = light.cornea_shininess;
  } else {
    albedo = sclera_albedo(model, tex, hit.point);
    ks = light.sclera_specular;
    shininess = light.sclera_shininess;
  }
  if (!lid) {
    for (const PunctateDot& dot : model.punctate_dots) {
      const double d2 = (hit.point - dot.point).squaredNorm();
      const double r2 = dot.radius * dot.radius;
      if (d2 < 16.0 * r2) albedo *= 1.0 - 0.75 * std::exp(-d2 / r2);
    }
  }

  const Vec3 light_pos = light.camera_attached ? camera_center : light.world_position;
  Vec3 to_light = light_pos - hit.point;
  const double dist = to_light.norm();
  to_light /= dist;
  const Vec3 to_eye = (camera_center - hit.point).normalized();
  const double att = (light.reference_distance / dist) * (light.reference_distance / dist);
  const double ndl = std::max(0.0, hit.normal.dot(to_light));
  const Vec3 half = (to_light + to_eye).normalized();
  const double spec = ks * std::pow(std::max(0.0, hit.normal.dot(half)), shininess);
  const Vec3 color = albedo * (light.ambient + light.diffuse * ndl) * att + Vec3::Constant(spec * att);
  return color.cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 camera_center_world(const Pose6DoF& camera_from_world) {
  return -(camera_from_world.rotation().transpose() * camera_from_world.translation());
}

Vec3 unit_direction(double polar, double azimuth) {
  return {std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth), -std::cos(polar)};
}

}  // namespace

bool EyelidBand::covers(const Vec3& p) const {
  return p.y() < edge_y + amplitude * std::sin(frequency * p.x() + phase);
}

void EyeModel::validate() const {
  if (!(sclera_radius > 0.0) || !(cornea_radius > 0.0)) {
    throw DomainError("eye model: radii must be positive");
  }
  if (!(cornea_radius < sclera_radius)) {
    throw DomainError("eye model: cornea radius must be smaller than sclera radius");
  }
  const double d = (sclera_center - cornea_center).norm();
  if (!(d < sclera_radius + cornea_radius) || !(d > sclera_radius - cornea_radius)) {
    throw DomainError("eye model: cornea and sclera spheres must intersect");
  }
}

EyeModel EyeModel::make_default(std::uint64_t seed) {
  EyeModel model;
  model.texture_seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double deg = pi / 180.0;

  for (int i = 0; i < 9; ++i) {
    const double polar = (28.0 + 22.0 * unit(rng)) * deg;
    const double azimuth = 2.0 * pi * unit(rng);
    const Vec3 a = unit_direction(polar, azimuth);
    // Random tangent at a, then tilt the vein plane off the great circle.
    Vec3 tangent = a.unitOrthogonal();
    const double turn = 2.0 * pi * unit(rng);
    tangent = Eigen::AngleAxisd(turn, a) * tangent;
    const Vec3 binormal = a.cross(tangent);
    const double beta = (unit(rng) - 0.5) * 0.8;
    Vein vein;
    vein.normal = (std::cos(beta) * binormal + std::sin(beta) * a).normalized();
    vein.offset = vein.normal.dot(a * model.sclera_radius);
    model.veins.push_back(vein);
  }

  int placed = 0;
  while (placed < 24) {
    const double polar = (29.0 + 21.0 * unit(rng)) * deg;
    const double azimuth = 2.0 * pi * unit(rng);
    const Vec3 p = model.sclera_center + model.sclera_radius * unit_direction(polar, azimuth);
    const double radius = 0.2 + 0.15 * unit(rng);
    if (model.eyelid.covers(p) || (p - model.cornea_center).norm() < model.cornea_radius) continue;
    model.punctate_dots.push_back({p, radius, Label::sclera});
    ++placed;
  }
  placed = 0;
  while (placed < 10) {
    const double rho = 0.8 + 3.6 * unit(rng);
    const double polar = std::asin(rho / model.cornea_radius);
    const double azimuth = 2.0 * pi * unit(rng);
    const Vec3 p = model.cornea_center + model.cornea_radius * unit_direction(polar, azimuth);
    const double radius = 0.18 + 0.12 * unit(rng);
    if (model.eyelid.covers(p) || (p - model.sclera_center).norm() < model.sclera_radius) continue;
    model.punctate_dots.push_back({p, radius, Label::cornea});
    ++placed;
  }
  return model;
}

std::optional<Vec3> SceneSample::world_point(int x, int y) const {
  if (!hit(x, y)) return std::nullopt;
  const double* p = surface.pixel(x, y);
  return Vec3(p[0], p[1], p[2]);
}

Pose6DoF default_camera_pose(double distance) {
  Pose6DoF p;
  p.tz = distance;
  return p;
}

Intrinsics default_synthetic_intrinsics(int width, int height) {
  Intrinsics k;
  const double scale = width / 128.0;
  k.fx = 240.0 * scale;
  k.fy = 240.0 * scale;
  k.cx = width / 2;
  k.cy = height / 2;
  k.width = width;
  k.height = height;
  return k;
}

SceneSample render(const EyeModel& model, const Pose6DoF& camera_from_world, const Intrinsics& k,
                   const RenderOptions& options) {
  model.validate();
  k.validate();
  const Vec3 cam = camera_center_world(camera_from_world);
  if ((cam - model.sclera_center).norm() <= model.sclera_radius ||
      (cam - model.cornea_center).norm() <= model.cornea_radius) {
    throw DomainError("render: camera centre lies inside the eye model");
  }
  if (!(camera_from_world.apply(model.sclera_center).z() > 0.0)) {
    throw DomainError("render: eye is behind the camera");
  }
  const int ss = std::max(1, options.supersamples);
  const int w = k.width;
  const int h = k.height;
  const Mat3 rt = camera_from_world.rotation().transpose();
  const TextureBank tex(model);

  SceneSample out{Frame(w, h), DepthMap(w, h), SegMap(w, h), camera_from_world,
                  Image(w, h, 3, 0.0), PixelMask(w, h, false)};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Hit hit = trace(model, cam, rt * dir_cam);
      if (hit.surface == Surface::none) {
        // Background behind the eye: treated as eyelid/skin, depth from the
        // camera-frame plane through the eye centre.
        const double z = camera_from_world.apply(model.sclera_center).z();
        out.depth(x, y) = z;
        out.seg.set(x, y, Label::eyelid);
      } else {
        out.depth(x, y) = hit.s;
        out.hit.set(x, y, true);
        double* sp = out.surface.pixel(x, y);
        sp[0] = hit.point.x();
        sp[1] = hit.point.y();
        sp[2] = hit.point.z();
        if (model.eyelid.covers(hit.point)) {
          out.seg.set(x, y, Label::eyelid);
        } else {
          out.seg.set(x, y, hit.surface == Surface::cornea ? Label::cornea : Label::sclera);
        }
      }

      Vec3 color = Vec3::Zero();
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double u = x + (sx + 0.5) / ss - 0.5;
          const double v = y + (sy + 0.5) / ss - 0.5;
          const Vec3 d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
          color += shade(model, tex, options.light, trace(model, cam, rt * d), cam);
        }
      }
      color /= static_cast<double>(ss * ss);
      double* px = out.frame.pixel(x, y);
      px[0] = color.x();
      px[1] = color.y();
      px[2] = color.z();
    }
  }
  return out;
}

std::vector<SceneSample> make_sequence(const EyeModel& model, std::span<const Pose6DoF> trajectory,
                                       const Intrinsics& k, const RenderOptions& options) {
  if (trajectory.size() < 2) throw DomainError("make_sequence: need at least two poses");
  std::vector<SceneSample> out;
  out.reserve(trajectory.size());
  for (const Pose6DoF& pose : trajectory) out.push_back(render(model, pose, k, options));
  return out;
}

Pose6DoF relative_pose(const SceneSample& target, const SceneSample& source) {
  return compose(source.pose, invert(target.pose));
}

std::vector<Pose6DoF> video_trajectory(int frames, double fps, double angular_speed,
                                       double drift_speed, std::uint64_t seed,
                                       const Pose6DoF& base) {
  if (frames < 2 || !(fps > 0.0)) throw DomainError("video_trajectory: need >= 2 frames and fps > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double axis_angle0 = 2.0 * pi * unit(rng);
  const double axis_turn = (unit(rng) - 0.5) * 0.6;  // rad/s
  const double drift_heading = 2.0 * pi * unit(rng);
  const Vec3 drift_dir(std::cos(drift_heading), std::sin(drift_heading), 0.3 * (unit(rng) - 0.5));
  const double omega = angular_speed * pi / 180.0;

  std::vector<Pose6DoF> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    const double t = i / fps;
    const double psi = axis_angle0 + axis_turn * t;
    const Vec3 axis(std::cos(psi), std::sin(psi), 0.0);
    const Mat3 eye_rotation = Eigen::AngleAxisd(omega * t, axis).toRotationMatrix();
    Mat4 eye = Mat4::Identity();
    eye.topLeftCorner<3, 3>() = eye_rotation;
    Pose6DoF head = base;
    const Vec3 drift = drift_dir.normalized() * drift_speed * t;
    head.tx += drift.x();
    head.ty += drift.y();
    head.tz += drift.z();
    out.push_back(compose(head, matrix_to_pose(eye)));
  }
  return out;
}

std::vector<Landmark> landmarks(const EyeModel& model) {
  std::vector<Landmark> out;
  for (std::size_t i = 0; i < model.punctate_dots.size(); ++i) {
    const PunctateDot& dot = model.punctate_dots[i];
    out.push_back({"dot_" + std::to_string(i), dot.point, dot.region});
  }
  const double r = model.sclera_radius;
  for (std::size_t i = 0; i < model.veins.size(); ++i) {
    for (std::size_t j = i + 1; j < model.veins.size(); ++j) {
      const Vein& a = model.veins[i];
      const Vein& b = model.veins[j];
      const double g = a.normal.dot(b.normal);
      if (std::abs(g) > 0.999) continue;
      const double ca = (a.offset - g * b.offset) / (1.0 - g * g);
      const double cb = (b.offset - g * a.offset) / (1.0 - g * g);
      const Vec3 q0 = ca * a.normal + cb * b.normal;
      const double rest = r * r - q0.squaredNorm();
      if (rest <= 0.0) continue;
      const Vec3 dir = a.normal.cross(b.normal).normalized();
      for (int sign = 0; sign < 2; ++sign) {
        const Vec3 q = q0 + (sign == 0 ? 1.0 : -1.0) * std::sqrt(rest) * dir;
        const Vec3 p = model.sclera_center + q;
        if (q.z() > -0.4 * r) continue;  // keep the anterior, camera-facing part
        if ((p - model.cornea_center).norm() < model.cornea_radius) continue;
        if (model.eyelid.covers(p)) continue;
        out.push_back({"vein_" + std::to_string(i) + "_" + std::to_string(j) + "_" +
                           std::to_string(sign),
                       p, Label::sclera});
      }
    }
  }
  return out;
}

std::optional<Vec2> observe(const EyeModel& model, const Pose6DoF& camera_from_world,
                            const Intrinsics& k, const Vec3& world_point) {
  const Vec3 pc = camera_from_world.apply(world_point);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Vec2 px = project(pc, k);
  if (px.x() < 0.0 || px.y() < 0.0 || px.x() > k.width - 1 || px.y() > k.height - 1) {
    return std::nullopt;
  }
  if (model.eyelid.covers(world_point)) return std::nullopt;
  const Vec3 cam = camera_center_world(camera_from_world);
  const Vec3 dir_cam((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0);
  const Hit hit = trace(model, cam, camera_from_world.rotation().transpose() * dir_cam);
  if (hit.surface == Surface::none) return std::nullopt;
  if (std::abs(hit.s - pc.z()) > 1e-6 * std::max(1.0, pc.z())) return std::nullopt;
  return px;
}

EyeSpheres spheres_in_camera(const EyeModel& model, const Pose6DoF& camera_from_world) {
  EyeSpheres out;
  const Vec3 s = camera_from_world.apply(model.sclera_center);
  const Vec3 c = camera_from_world.apply(model.cornea_center);
  out.sclera = {s.x(), s.y(), s.z(), model.sclera_radius, 0.0};
  out.cornea = {c.x(), c.y(), c.z(), model.cornea_radius, 0.0};
  return out;
}

}  // namespace ocumap

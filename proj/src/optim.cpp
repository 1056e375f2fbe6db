#include "ocumap/optim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "ocumap/errors.hpp"

namespace ocumap {
namespace {

using Eigen::VectorXd;

struct Problem {
  std::function<LossReport(const VectorXd&)> evaluate;
  std::function<void(VectorXd&)> project;  // may be empty
};

struct Minimum {
  VectorXd z;
  std::vector<LossReport> trace;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
};

struct NonFinite {
  int parameter;
};

VectorXd fd_gradient(const Problem& problem, const VectorXd& z, double eps) {
  VectorXd g(z.size());
  VectorXd probe = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    probe(i) = z(i) + eps;
    const double up = problem.evaluate(probe).total;
    probe(i) = z(i) - eps;
    const double down = problem.evaluate(probe).total;
    probe(i) = z(i);
    if (!std::isfinite(up) || !std::isfinite(down)) throw NonFinite{static_cast<int>(i)};
    g(i) = (up - down) / (2.0 * eps);
  }
  return g;
}

Minimum minimize(const Problem& problem, VectorXd z, const OptimConfig& config) {
  Minimum out;
  auto project = [&](VectorXd& v) {
    if (problem.project) problem.project(v);
  };
  project(z);
  LossReport current = problem.evaluate(z);
  out.trace.push_back(current);
  out.z = z;
  if (!current.finite()) {
    out.diverged = true;
    return out;
  }

  const double min_valid = config.min_valid_fraction * static_cast<double>(current.valid_pixel_count);
  auto acceptable = [&](const LossReport& r) {
    return r.finite() && static_cast<double>(r.valid_pixel_count) >= min_valid;
  };
  const Eigen::Index n = z.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool have_curvature = false;
  VectorXd g_prev;
  VectorXd s_prev;

  for (int iter = 0; iter < config.max_iters; ++iter) {
    VectorXd g;
    try {
      g = fd_gradient(problem, z, config.fd_epsilon);
    } catch (const NonFinite&) {
      out.diverged = true;
      break;
    }
    const double gnorm = g.norm();
    if (!(gnorm > 0.0)) {
      out.converged = true;
      break;
    }

    if (config.direction == SearchDirection::bfgs && s_prev.size() == n) {
      const VectorXd y = g - g_prev;
      const double ys = y.dot(s_prev);
      if (ys > 1e-12 * y.norm() * s_prev.norm()) {
        if (!have_curvature) {
          h = Eigen::MatrixXd::Identity(n, n) * (ys / y.squaredNorm());
          have_curvature = true;
        }
        const double rho = 1.0 / ys;
        const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s_prev * y.transpose();
        h = left * h * left.transpose() + rho * s_prev * s_prev.transpose();
      }
    }

    VectorXd d;
    if (have_curvature) {
      d = -(h * g);
      if (!(d.dot(g) < 0.0)) {
        have_curvature = false;
        h.setIdentity();
      }
    }
    if (!have_curvature) d = -g * (config.initial_step / gnorm);
    if (d.norm() > config.max_step) d *= config.max_step / d.norm();

    VectorXd z_next;
    LossReport next;
    bool accepted = false;
    if (config.step_rule == StepRule::fixed_step) {
      z_next = z + config.fixed_step * d;
      project(z_next);
      next = problem.evaluate(z_next);
      if (!next.finite()) {
        out.diverged = true;
        break;
      }
      accepted = true;
    } else {
      const double slope = g.dot(d);
      for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
        double alpha = 1.0;
        for (int k = 0; k < 40; ++k, alpha *= 0.5) {
          z_next = z + alpha * d;
          project(z_next);
          next = problem.evaluate(z_next);
          if (acceptable(next) && next.total < current.total &&
              next.total <= current.total + 1e-4 * alpha * slope) {
            accepted = true;
            break;
          }
        }
        if (!accepted && have_curvature) {
          // Quasi-Newton direction failed; retry once along the gradient.
          have_curvature = false;
          h.setIdentity();
          d = -g * (std::min(config.initial_step, config.max_step) / gnorm);
        } else {
          break;
        }
      }
      if (!accepted) {
        out.converged = true;
        break;
      }
    }

    const double decrease = current.total - next.total;
    s_prev = z_next - z;
    g_prev = g;
    z = std::move(z_next);
    current = next;
    out.trace.push_back(current);
    out.z = z;
    ++out.iterations;
    if (config.step_rule == StepRule::backtracking && decrease < config.convergence_tol) {
      out.converged = true;
      break;
    }
    if (config.step_rule == StepRule::fixed_step && std::abs(decrease) < config.convergence_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

VectorXd poses_to_vector(std::span<const Pose6DoF> poses, double rotation_unit) {
  VectorXd z(static_cast<Eigen::Index>(6 * poses.size()));
  for (std::size_t s = 0; s < poses.size(); ++s) {
    const auto a = poses[s].to_array();
    for (int i = 0; i < 6; ++i) {
      z(static_cast<Eigen::Index>(6 * s + i)) = i < 3 ? a[i] : a[i] / rotation_unit;
    }
  }
  return z;
}

std::vector<Pose6DoF> vector_to_poses(const VectorXd& z, double rotation_unit) {
  std::vector<Pose6DoF> poses(static_cast<std::size_t>(z.size() / 6));
  for (std::size_t s = 0; s < poses.size(); ++s) {
    std::array<double, 6> a{};
    for (int i = 0; i < 6; ++i) {
      const double v = z(static_cast<Eigen::Index>(6 * s + i));
      a[i] = i < 3 ? v : v * rotation_unit;
    }
    poses[s] = Pose6DoF::from_array(a);
  }
  return poses;
}

bool pose_list_less(const std::vector<Pose6DoF>& a, const std::vector<Pose6DoF>& b) {
  for (std::size_t s = 0; s < a.size(); ++s) {
    const auto x = a[s].to_array();
    const auto y = b[s].to_array();
    if (x != y) return x < y;
  }
  return false;
}

OptimResult estimate_from(const PairObjective& objective, const OptimConfig& config,
                          std::span<const Pose6DoF> init) {
  config.validate();
  if (init.size() != objective.source_count()) {
    throw DomainError("estimate_pose: expected one initial pose per source view");
  }
  const PairInputs& full = objective.inputs();
  if (config.pyramid_levels > 1 && full.target.width() >= 16 && full.target.height() >= 16) {
    const PairObjective coarse(full.downsampled(), objective.weights());
    OptimConfig coarse_config = config;
    coarse_config.pyramid_levels = config.pyramid_levels - 1;
    const OptimResult first = estimate_from(coarse, coarse_config, init);
    OptimConfig fine_config = config;
    fine_config.pyramid_levels = 1;
    fine_config.multi_start = 1;
    OptimResult out = estimate_from(objective, fine_config, first.poses);
    out.iterations_used += first.iterations_used;
    out.start_index = first.start_index;
    out.diverged = out.diverged || first.diverged;
    return out;
  }

  Problem problem;
  problem.evaluate = [&](const VectorXd& z) {
    const std::vector<Pose6DoF> poses = vector_to_poses(z, config.rotation_unit);
    return objective.evaluate(poses);
  };

  std::optional<OptimResult> best;
  for (int start = 0; start < config.multi_start; ++start) {
    std::vector<Pose6DoF> poses(init.begin(), init.end());
    if (start > 0) {
      const int axis = ((start - 1) / 2) % 3;
      const double sign = (start % 2 == 1) ? 1.0 : -1.0;
      // Larger perturbations once every axis has been tried in both directions.
      const double scale = 1.0 + (start - 1) / 6;
      for (Pose6DoF& p : poses) {
        auto a = p.to_array();
        a[3 + axis] += sign * scale * config.multi_start_rotation;
        p = Pose6DoF::from_array(a);
      }
    }
    const Minimum m = minimize(problem, poses_to_vector(poses, config.rotation_unit), config);
    OptimResult r;
    r.poses = vector_to_poses(m.z, config.rotation_unit);
    r.loss_trace = m.trace;
    r.converged = m.converged;
    r.diverged = m.diverged;
    r.iterations_used = m.iterations;
    r.start_index = start;
    if (!best) {
      best = std::move(r);
      continue;
    }
    const double a = r.final_loss().total;
    const double b = best->final_loss().total;
    const bool a_ok = std::isfinite(a);
    const bool b_ok = std::isfinite(b);
    if ((a_ok && !b_ok) || (a_ok && a < b) || (a_ok && a == b && pose_list_less(r.poses, best->poses))) {
      best = std::move(r);
    }
  }
  return *best;
}

}  // namespace

StepRule parse_step_rule(std::string_view name) {
  if (name == "fixed" || name == "fixed-step") return StepRule::fixed_step;
  if (name == "backtracking") return StepRule::backtracking;
  throw DomainError("unknown step rule '" + std::string(name) + "'");
}

SearchDirection parse_search_direction(std::string_view name) {
  if (name == "steepest" || name == "steepest-descent") return SearchDirection::steepest_descent;
  if (name == "bfgs") return SearchDirection::bfgs;
  throw DomainError("unknown search direction '" + std::string(name) + "'");
}

DepthParametrization parse_depth_parametrization(std::string_view name) {
  if (name == "two-sphere") return DepthParametrization::two_sphere;
  if (name == "per-pixel-offset") return DepthParametrization::per_pixel_offset;
  throw DomainError("unknown depth parametrization '" + std::string(name) + "'");
}

void OptimConfig::validate() const {
  if (max_iters <= 0) throw DomainError("OptimConfig: max_iters must be positive");
  if (!(fd_epsilon > 0.0)) throw DomainError("OptimConfig: fd_epsilon must be positive");
  if (!(convergence_tol > 0.0)) throw DomainError("OptimConfig: convergence_tol must be positive");
  if (multi_start <= 0) throw DomainError("OptimConfig: multi_start must be positive");
  if (!(rotation_unit > 0.0)) throw DomainError("OptimConfig: rotation_unit must be positive");
  if (!(initial_step > 0.0)) throw DomainError("OptimConfig: initial_step must be positive");
  if (!(fixed_step > 0.0)) throw DomainError("OptimConfig: fixed_step must be positive");
  if (!(max_step > 0.0)) throw DomainError("OptimConfig: max_step must be positive");
  if (pyramid_levels <= 0) throw DomainError("OptimConfig: pyramid_levels must be positive");
  if (!(min_valid_fraction >= 0.0 && min_valid_fraction <= 1.0)) {
    throw DomainError("OptimConfig: min_valid_fraction must lie in [0, 1]");
  }
}

OptimConfig optim_config_from(const KeyValueConfig& config, OptimConfig base) {
  base.max_iters = static_cast<int>(config.get_int_or("max_iters", base.max_iters));
  if (auto v = config.get("step_rule")) base.step_rule = parse_step_rule(*v);
  if (auto v = config.get("direction")) base.direction = parse_search_direction(*v);
  if (auto v = config.get("init_pose")) {
    std::istringstream in(*v);
    std::array<double, 6> a{};
    for (double& v : a) {
      if (!(in >> v)) throw ParseError("init_pose: expected six numbers");
    }
    std::string extra;
    if (in >> extra) throw ParseError("init_pose: expected six numbers");
    base.init_pose = Pose6DoF::from_array(a);
  }
  base.convergence_tol = config.get_double_or("convergence_tol", base.convergence_tol);
  base.fd_epsilon = config.get_double_or("fd_epsilon", base.fd_epsilon);
  base.multi_start = static_cast<int>(config.get_int_or("multi_start", base.multi_start));
  if (auto deg = config.get_double("multi_start_rotation_deg")) {
    base.multi_start_rotation = *deg * std::numbers::pi / 180.0;
  }
  base.rotation_unit = config.get_double_or("rotation_unit", base.rotation_unit);
  base.initial_step = config.get_double_or("initial_step", base.initial_step);
  base.fixed_step = config.get_double_or("fixed_step", base.fixed_step);
  base.max_step = config.get_double_or("max_step", base.max_step);
  base.min_valid_fraction = config.get_double_or("min_valid_fraction", base.min_valid_fraction);
  base.pyramid_levels = static_cast<int>(config.get_int_or("pyramid_levels", base.pyramid_levels));
  base.validate();
  return base;
}

std::array<double, 6> pose_gradient(const PairObjective& objective, const Pose6DoF& pose,
                                    double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("pose_gradient: epsilon must be positive");
  if (objective.source_count() != 1) throw DomainError("pose_gradient: expected a single source view");
  static constexpr const char* kNames[6] = {"tx", "ty", "tz", "rx", "ry", "rz"};
  std::array<double, 6> g{};
  const auto base = pose.to_array();
  for (int i = 0; i < 6; ++i) {
    auto up = base;
    auto down = base;
    up[i] += epsilon;
    down[i] -= epsilon;
    const double fu = objective.evaluate(Pose6DoF::from_array(up)).total;
    const double fd = objective.evaluate(Pose6DoF::from_array(down)).total;
    if (!std::isfinite(fu) || !std::isfinite(fd)) {
      throw GradientError(std::string("pose_gradient: non-finite loss probing ") + kNames[i], i);
    }
    g[i] = (fu - fd) / (2.0 * epsilon);
  }
  return g;
}

std::array<double, 6> pose_gradient(const PairInputs& inputs, const Pose6DoF& pose,
                                    const LossWeights& weights, double epsilon) {
  return pose_gradient(PairObjective(inputs, weights), pose, epsilon);
}

OptimResult estimate_pose(const PairObjective& objective, const OptimConfig& config) {
  const std::vector<Pose6DoF> init(objective.source_count(), config.init_pose);
  return estimate_from(objective, config, init);
}

OptimResult estimate_pose(const PairInputs& inputs, const OptimConfig& config,
                          const LossWeights& weights) {
  return estimate_pose(PairObjective(inputs, weights), config);
}

EyeSpheres fit_eye_spheres(const DepthMap& depth, const SegMap& seg, const Intrinsics& k) {
  EyeSpheres spheres;
  spheres.sclera = fit_sphere(region_cloud(depth, seg, k, Label::sclera));
  spheres.cornea = fit_sphere(region_cloud(depth, seg, k, Label::cornea));
  return spheres;
}

DepthRefineResult refine_depth(const PairInputs& inputs, std::span<const Pose6DoF> poses,
                               DepthParametrization parametrization, const OptimConfig& config,
                               const LossWeights& weights, const DepthRefineOptions& options) {
  config.validate();
  PairObjective objective(inputs, weights);
  if (poses.size() != objective.source_count()) {
    throw DomainError("refine_depth: expected one pose per source view");
  }
  const std::vector<Pose6DoF> pose_list(poses.begin(), poses.end());
  const EyeSpheres base_spheres = options.initial_spheres
                                      ? *options.initial_spheres
                                      : fit_eye_spheres(inputs.target_depth, inputs.target_seg, inputs.k);
  const int w = inputs.target.width();
  const int h = inputs.target.height();

  DepthRefineResult out;
  Problem problem;
  VectorXd z0;
  std::function<DepthMap(const VectorXd&)> depth_of;

  if (parametrization == DepthParametrization::two_sphere) {
    auto spheres_of = [](const VectorXd& z) {
      EyeSpheres s;
      s.sclera.x0 = z(0);
      s.sclera.y0 = z(1);
      s.sclera.z0 = z(2);
      s.sclera.r = z(3);
      s.cornea.x0 = z(4);
      s.cornea.y0 = z(5);
      s.cornea.z0 = z(6);
      s.cornea.r = z(7);
      return s;
    };
    z0.resize(8);
    z0 << base_spheres.sclera.x0, base_spheres.sclera.y0, base_spheres.sclera.z0, base_spheres.sclera.r,
        base_spheres.cornea.x0, base_spheres.cornea.y0, base_spheres.cornea.z0, base_spheres.cornea.r;
    depth_of = [&, spheres_of](const VectorXd& z) {
      return sphere_depth(spheres_of(z), inputs.target_seg, inputs.k);
    };
    problem.project = [](VectorXd& z) {
      z(3) = std::max(z(3), 1e-3);
      z(7) = std::max(z(7), 1e-3);
    };
    out.spheres = base_spheres;
    problem.evaluate = [&](const VectorXd& z) {
      objective.set_depth(depth_of(z));
      return objective.evaluate(pose_list);
    };
    const Minimum m = minimize(problem, z0, config);
    out.spheres = spheres_of(m.z);
    out.depth = depth_of(m.z);
    out.loss_trace = m.trace;
    out.converged = m.converged;
    out.diverged = m.diverged;
    out.iterations_used = m.iterations;
    return out;
  }

  if (options.grid_spacing <= 0) throw DomainError("refine_depth: grid_spacing must be positive");
  if (!(options.offset_bound > 0.0)) throw DomainError("refine_depth: offset_bound must be positive");
  const DepthMap base = options.offset_base == OffsetBase::two_sphere
                            ? sphere_depth(base_spheres, inputs.target_seg, inputs.k)
                            : inputs.target_depth;
  const int spacing = options.grid_spacing;
  const int gx = (w - 1 + spacing - 1) / spacing + 1;
  const int gy = (h - 1 + spacing - 1) / spacing + 1;

  // The control grid lives in full-resolution pixel coordinates; coarser
  // levels sample it at the centres of their 2^l x 2^l blocks.
  auto offset_depth = [gx, gy, spacing](const DepthMap& level_base, int level, const VectorXd& z) {
    DepthMap d = level_base;
    const double scale = static_cast<double>(1 << level);
    const double shift = 0.5 * (scale - 1.0);
    for (int y = 0; y < d.height(); ++y) {
      const double fy = (scale * y + shift) / spacing;
      const int y0 = std::clamp(static_cast<int>(fy), 0, gy - 2);
      const double ay = fy - y0;
      for (int x = 0; x < d.width(); ++x) {
        const double fx = (scale * x + shift) / spacing;
        const int x0 = std::clamp(static_cast<int>(fx), 0, gx - 2);
        const double ax = fx - x0;
        const double v00 = z(y0 * gx + x0);
        const double v10 = z(y0 * gx + x0 + 1);
        const double v01 = z((y0 + 1) * gx + x0);
        const double v11 = z((y0 + 1) * gx + x0 + 1);
        d(x, y) += (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
      }
    }
    return d;
  };

  std::vector<PairInputs> levels;
  levels.push_back(inputs);
  levels.back().target_depth = base;
  while (static_cast<int>(levels.size()) < config.pyramid_levels && levels.back().target.width() >= 32 &&
         levels.back().target.height() >= 32) {
    levels.push_back(levels.back().downsampled());
  }

  const double bound = options.offset_bound;
  problem.project = [bound](VectorXd& z) { z = z.cwiseMax(-bound).cwiseMin(bound); };
  VectorXd z = VectorXd::Zero(gx * gy);
  for (int level = static_cast<int>(levels.size()) - 1; level >= 0; --level) {
    const PairInputs& li = levels[static_cast<std::size_t>(level)];
    PairObjective level_objective(li, weights);
    problem.evaluate = [&](const VectorXd& v) {
      level_objective.set_depth(offset_depth(li.target_depth, level, v));
      return level_objective.evaluate(pose_list);
    };
    OptimConfig level_config = config;
    if (level + 1 < static_cast<int>(levels.size())) level_config.max_iters = options.refine_iters;
    const Minimum m = minimize(problem, z, level_config);
    z = m.z;
    out.iterations_used += m.iterations;
    out.diverged = out.diverged || m.diverged;
    out.converged = m.converged;
    out.loss_trace = m.trace;
    if (m.diverged) break;
  }
  out.spheres = base_spheres;
  out.depth = offset_depth(base, 0, z);
  return out;
}

RegistrationResult register_pair(const PairInputs& inputs, const OptimConfig& config,
                                 const LossWeights& weights, int rounds,
                                 DepthParametrization parametrization,
                                 const DepthRefineOptions& options) {
  if (rounds < 0) throw DomainError("register_pair: rounds must be non-negative");
  PairInputs current = inputs;
  PairObjective objective(current, weights);
  RegistrationResult out;
  out.pose = estimate_pose(objective, config);
  out.depth = current.target_depth;
  OptimConfig follow = config;
  follow.multi_start = 1;
  for (int round = 0; round < rounds; ++round) {
    DepthRefineOptions opts = options;
    if (round > 0) opts.initial_spheres.reset();
    const DepthRefineResult refined =
        refine_depth(current, out.pose.poses, parametrization, config, weights, opts);
    if (refined.diverged) break;
    current.target_depth = refined.depth;
    out.depth = refined.depth;
    out.depth_trace.insert(out.depth_trace.end(), refined.loss_trace.begin(), refined.loss_trace.end());
    objective.set_depth(current.target_depth);
    out.pose = estimate_from(objective, follow, out.pose.poses);
  }
  return out;
}

}  // namespace ocumap

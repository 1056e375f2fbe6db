#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ocumap/camera.hpp"
#include "ocumap/config.hpp"
#include "ocumap/losses.hpp"
#include "ocumap/spherefit.hpp"

namespace ocumap {

enum class StepRule { fixed_step, backtracking };
enum class SearchDirection { steepest_descent, bfgs };

StepRule parse_step_rule(std::string_view name);
SearchDirection parse_search_direction(std::string_view name);

struct OptimConfig {
  int max_iters = 60;
  StepRule step_rule = StepRule::backtracking;
  SearchDirection direction = SearchDirection::bfgs;
  Pose6DoF init_pose;
  // Stop once an accepted step lowers the total by less than this.
  double convergence_tol = 1e-9;
  // Central-difference step in normalized parameter units (see rotation_unit).
  double fd_epsilon = 1e-3;
  // Number of initializations: init_pose plus multi_start - 1 perturbed copies.
  int multi_start = 5;
  double multi_start_rotation = 0.0349065850398865915;  // 2 degrees, in radians
  // Radians treated as one unit of rotation when normalizing the pose
  // parameters, so that a unit step moves the image by roughly as much as
  // 1 mm of translation.
  double rotation_unit = 0.02;
  // Length of the first step, in normalized units.
  double initial_step = 0.5;
  // Step length multiplier for StepRule::fixed_step.
  double fixed_step = 1.0;
  // Upper bound on the length of any step, in normalized units.
  double max_step = 2.0;
  // The line search rejects points whose valid pixel count drops below this
  // fraction of the count at the starting point; a masked mean over a handful
  // of pixels is otherwise an easy minimum.
  double min_valid_fraction = 0.5;
  // Levels of a 2x image pyramid. The multi-start search runs on the coarsest
  // level and the winner is refined down to full resolution.
  int pyramid_levels = 1;

  // Throws DomainError on out-of-range fields.
  void validate() const;
};

// Keys: max_iters, step_rule (fixed | backtracking), direction (steepest | bfgs),
// init_pose (six numbers), convergence_tol, fd_epsilon, multi_start,
// multi_start_rotation_deg, rotation_unit, initial_step, fixed_step, max_step,
// min_valid_fraction, pyramid_levels.
OptimConfig optim_config_from(const KeyValueConfig& config, OptimConfig base = {});

struct OptimResult {
  std::vector<Pose6DoF> poses;  // one per source view
  std::vector<LossReport> loss_trace;  // starting point first, then each accepted step
  bool converged = false;
  bool diverged = false;
  int iterations_used = 0;
  int start_index = 0;  // which initialization won

  const Pose6DoF& pose() const { return poses.front(); }
  const LossReport& final_loss() const { return loss_trace.back(); }
};

// Central finite differences of the weighted total over (tx, ty, tz, rx, ry, rz)
// with absolute step `epsilon` on every parameter. Throws GradientError naming
// the parameter when a probe evaluates to a non-finite loss.
std::array<double, 6> pose_gradient(const PairObjective& objective, const Pose6DoF& pose,
                                    double epsilon);
std::array<double, 6> pose_gradient(const PairInputs& inputs, const Pose6DoF& pose,
                                    const LossWeights& weights, double epsilon);

// Minimizes the total loss over one pose per source view. Starts from
// config.init_pose for every source; perturbed starts rotate the initial pose
// by +-multi_start_rotation about x, then y, then z. The start with the lowest
// final total wins, ties broken by the lexicographically smaller pose. With a
// pyramid the returned trace covers the full-resolution stage only.
OptimResult estimate_pose(const PairObjective& objective, const OptimConfig& config);
OptimResult estimate_pose(const PairInputs& inputs, const OptimConfig& config,
                          const LossWeights& weights);

enum class DepthParametrization { two_sphere, per_pixel_offset };

DepthParametrization parse_depth_parametrization(std::string_view name);

enum class OffsetBase { two_sphere, supplied };

struct DepthRefineOptions {
  // Starting spheres; when absent they are fitted to the supplied depth.
  std::optional<EyeSpheres> initial_spheres;
  // Depth the per-pixel offsets are added to: the two-sphere depth of the
  // starting spheres, or the supplied depth itself.
  OffsetBase offset_base = OffsetBase::two_sphere;
  // Control-point spacing (pixels) of the bilinear offset grid.
  int grid_spacing = 16;
  // Offsets are clamped to [-offset_bound, offset_bound] mm.
  double offset_bound = 2.0;
  // With config.pyramid_levels > 1 the offsets are solved on the coarsest
  // level and then polished for at most this many iterations per finer level.
  int refine_iters = 10;
};

struct DepthRefineResult {
  DepthMap depth;
  EyeSpheres spheres;  // optimized spheres, or the base spheres in offset mode
  std::vector<LossReport> loss_trace;
  bool converged = false;
  bool diverged = false;
  int iterations_used = 0;
};

// Fits scleral and corneal spheres to the labelled depth pixels. Throws
// InsufficientDataError or DegenerateGeometryError when a region cannot be
// fitted.
EyeSpheres fit_eye_spheres(const DepthMap& depth, const SegMap& seg, const Intrinsics& k);

// two_sphere: optimizes the 8 sphere parameters and returns the implied depth.
// per_pixel_offset: optimizes bounded offsets on a coarse control grid added to
// the base depth chosen by options.offset_base. config.init_pose, multi_start and the rotation
// settings are ignored; `poses` holds one pose per source view.
DepthRefineResult refine_depth(const PairInputs& inputs, std::span<const Pose6DoF> poses,
                               DepthParametrization parametrization, const OptimConfig& config,
                               const LossWeights& weights, const DepthRefineOptions& options = {});

struct RegistrationResult {
  OptimResult pose;
  DepthMap depth;
  std::vector<LossReport> depth_trace;
};

// Alternates estimate_pose and refine_depth for `rounds` rounds starting from
// the depth in `inputs`; rounds == 0 estimates the pose only.
RegistrationResult register_pair(const PairInputs& inputs, const OptimConfig& config,
                                 const LossWeights& weights, int rounds,
                                 DepthParametrization parametrization,
                                 const DepthRefineOptions& options = {});

}  // namespace ocumap

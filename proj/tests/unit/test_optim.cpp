#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "ocumap/errors.hpp"
#include "ocumap/optim.hpp"
#include "ocumap/synth.hpp"
#include "ocumap/warp.hpp"

using namespace ocumap;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Scene {
  PairInputs inputs;
  Pose6DoF truth;  // target -> source
};

// Two renders of the same eye; the source camera is moved by `motion`.
Scene make_scene(const Pose6DoF& motion, int w = 64, int h = 48) {
  static const EyeModel model = EyeModel::make_default(7);
  const Intrinsics k = default_synthetic_intrinsics(w, h);
  const SceneSample t = render(model, default_camera_pose(), k);
  const SceneSample s = render(model, compose(motion, default_camera_pose()), k);
  Scene out;
  out.inputs.target = t.frame;
  out.inputs.target_seg = t.seg;
  out.inputs.target_depth = t.depth;
  out.inputs.sources.push_back({s.frame, s.seg});
  out.inputs.k = k;
  out.truth = relative_pose(t, s);
  return out;
}

// Mean distance between pixels carried by `pose` and by the true motion.
double mean_pixel_error(const Scene& sc, const Pose6DoF& pose) {
  const Intrinsics& k = sc.inputs.k;
  double sum = 0.0;
  int n = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      if (sc.inputs.target_seg(x, y) == Label::eyelid) continue;
      const TrackedPoint a = track_point({x, y}, sc.inputs.target_depth(x, y), pose, k);
      const TrackedPoint b = track_point({x, y}, sc.inputs.target_depth(x, y), sc.truth, k);
      if (!a.valid || !b.valid) continue;
      sum += (a.pixel - b.pixel).norm();
      ++n;
    }
  return n ? sum / n : 0.0;
}

OptimConfig quick_config() {
  OptimConfig c;
  c.multi_start = 1;
  c.max_iters = 40;
  return c;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  const KeyValueConfig kv = KeyValueConfig::parse(
      "max_iters = 7\nstep_rule = fixed\ndirection = steepest\ninit_pose = 1 2 3 0.1 0.2 0.3\n"
      "multi_start_rotation_deg = 4\npyramid_levels = 2\n");
  const OptimConfig c = optim_config_from(kv);
  CHECK(c.max_iters == 7);
  CHECK(c.step_rule == StepRule::fixed_step);
  CHECK(c.direction == SearchDirection::steepest_descent);
  CHECK(c.init_pose == Pose6DoF{1, 2, 3, 0.1, 0.2, 0.3});
  CHECK(c.multi_start_rotation == doctest::Approx(4 * kDeg));
  CHECK(c.pyramid_levels == 2);
  CHECK(c.max_step == OptimConfig{}.max_step);

  CHECK_THROWS_AS(optim_config_from(KeyValueConfig::parse("init_pose = 1 2 3\n")), ParseError);
  CHECK_THROWS_AS(optim_config_from(KeyValueConfig::parse("init_pose = 1 2 3 4 5 6 7\n")), ParseError);
  CHECK_THROWS_AS(optim_config_from(KeyValueConfig::parse("max_iters = 0\n")), DomainError);
  CHECK_THROWS_AS(optim_config_from(KeyValueConfig::parse("min_valid_fraction = 2\n")), DomainError);
  CHECK_THROWS_AS(optim_config_from(KeyValueConfig::parse("step_rule = wolfe\n")), DomainError);
  CHECK_THROWS_AS(parse_depth_parametrization("mesh"), DomainError);
  CHECK(parse_depth_parametrization("per-pixel-offset") == DepthParametrization::per_pixel_offset);
}

TEST_CASE("pose_gradient is the central difference of total_loss") {
  const Scene sc = make_scene({0.2, 0, 0, 0, 0.5 * kDeg, 0});
  const LossWeights w = LossWeights::synthetic();
  const Pose6DoF at{0.05, -0.02, 0.1, 0.001, 0.002, -0.001};
  const double eps = 1e-4;
  const auto g = pose_gradient(sc.inputs, at, w, eps);
  for (int i = 0; i < 6; ++i) {
    auto up = at.to_array(), down = at.to_array();
    up[i] += eps;
    down[i] -= eps;
    const double expected = (total_loss(sc.inputs, Pose6DoF::from_array(up), w).total -
                             total_loss(sc.inputs, Pose6DoF::from_array(down), w).total) /
                            (2 * eps);
    CHECK(g[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pose_gradient(sc.inputs, at, w, 0.0), DomainError);
}

TEST_CASE("non-finite losses: GradientError and a diverged flag") {
  Scene sc = make_scene({});
  sc.inputs.target.at(10, 10, 0) = std::numeric_limits<double>::quiet_NaN();
  const LossWeights w = LossWeights::synthetic();
  try {
    (void)pose_gradient(sc.inputs, Pose6DoF::identity(), w, 1e-3);
    FAIL("expected GradientError");
  } catch (const GradientError& e) {
    CHECK(e.parameter() == 0);
    CHECK(std::string(e.what()).find("tx") != std::string::npos);
  }
  const OptimResult r = estimate_pose(sc.inputs, quick_config(), w);
  CHECK(r.diverged);
  CHECK_FALSE(r.converged);
}

TEST_CASE("an identical pair stays at the identity") {
  const Scene sc = make_scene({});
  const OptimResult r = estimate_pose(sc.inputs, quick_config(), LossWeights::synthetic());
  CHECK_FALSE(r.diverged);
  CHECK(rotation_distance(r.pose(), Pose6DoF::identity()) < 0.01 * kDeg);
  CHECK(translation_distance(r.pose(), Pose6DoF::identity()) < 0.01);
}

TEST_CASE("a small known motion is recovered with ground-truth depth") {
  const Scene sc = make_scene({0.3, -0.2, 0.4, 0.6 * kDeg, -1.0 * kDeg, 0.8 * kDeg});
  for (const SearchDirection dir : {SearchDirection::bfgs, SearchDirection::steepest_descent}) {
    OptimConfig c = quick_config();
    c.direction = dir;
    c.max_iters = 80;
    const OptimResult r = estimate_pose(sc.inputs, c, LossWeights::synthetic());
    CHECK_FALSE(r.diverged);
    const double start = total_loss(sc.inputs, Pose6DoF::identity(), LossWeights::synthetic()).total;
    CHECK(r.final_loss().total < start);
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i) {
      CHECK(r.loss_trace[i].total < r.loss_trace[i - 1].total);
    }
    if (dir == SearchDirection::bfgs) {
      // Rotation about the eye and sideways translation trade off at this
      // size; the image motion is what must match.
      CHECK(mean_pixel_error(sc, r.pose()) < 0.25);
      CHECK(mean_pixel_error(sc, r.pose()) < 0.1 * mean_pixel_error(sc, Pose6DoF::identity()));
    }
  }
}

TEST_CASE("multi-start and pyramid runs are deterministic") {
  const Scene sc = make_scene({0.2, 0.1, 0, 0, 0.8 * kDeg, 0});
  OptimConfig c = quick_config();
  c.multi_start = 3;
  c.pyramid_levels = 2;
  c.max_iters = 20;
  const OptimResult a = estimate_pose(sc.inputs, c, LossWeights::synthetic());
  const OptimResult b = estimate_pose(sc.inputs, c, LossWeights::synthetic());
  CHECK(a.pose() == b.pose());
  CHECK(a.start_index == b.start_index);
  CHECK(a.start_index >= 0);
  CHECK(a.start_index < 3);
}

TEST_CASE("depth refinement lowers the loss") {
  const Scene sc = make_scene({0.2, 0, 0, 0, 1.0 * kDeg, 0});
  PairInputs in = sc.inputs;
  const int w = in.target.width(), h = in.target.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (x - w / 2.0) / (w / 2.0), v = (y - h / 2.0) / (w / 2.0);
      in.target_depth(x, y) += 1.0 * (u * u - v * v);
    }
  const LossWeights weights = LossWeights::synthetic();
  const std::vector<Pose6DoF> poses{sc.truth};
  OptimConfig c = quick_config();
  c.max_iters = 15;

  DepthRefineOptions offsets;
  offsets.offset_base = OffsetBase::supplied;
  const DepthRefineResult a =
      refine_depth(in, poses, DepthParametrization::per_pixel_offset, c, weights, offsets);
  REQUIRE(a.loss_trace.size() >= 2);
  CHECK(a.loss_trace.back().total < a.loss_trace.front().total);
  CHECK(a.depth.width() == w);

  const DepthRefineResult b = refine_depth(in, poses, DepthParametrization::two_sphere, c, weights);
  CHECK(b.loss_trace.back().total <= b.loss_trace.front().total);
  CHECK(b.spheres.cornea.r > 0.0);

  const std::vector<Pose6DoF> none;
  CHECK_THROWS_AS(refine_depth(in, none, DepthParametrization::two_sphere, c, weights), DomainError);
  DepthRefineOptions bad;
  bad.grid_spacing = 0;
  CHECK_THROWS_AS(refine_depth(in, poses, DepthParametrization::per_pixel_offset, c, weights, bad),
                  DomainError);
}

TEST_CASE("register_pair without rounds is a plain pose estimate") {
  const Scene sc = make_scene({0.1, 0, 0, 0, 0.5 * kDeg, 0});
  OptimConfig c = quick_config();
  c.max_iters = 10;
  const LossWeights w = LossWeights::synthetic();
  const RegistrationResult r = register_pair(sc.inputs, c, w, 0, DepthParametrization::two_sphere);
  const OptimResult p = estimate_pose(sc.inputs, c, w);
  CHECK(r.pose.pose() == p.pose());
  CHECK(r.depth_trace.empty());
  CHECK_THROWS_AS(register_pair(sc.inputs, c, w, -1, DepthParametrization::two_sphere), DomainError);
}

TEST_CASE("the tz gradient component follows a tz perturbation") {
  const Scene sc = make_scene({0.5, -0.3, 0.2, 0, 1.0 * kDeg, 0.5 * kDeg});
  const PairObjective objective(sc.inputs, LossWeights::paper());
  for (const double d : {0.3, -0.3}) {
    Pose6DoF p = sc.truth;
    p.tz += d;
    const double up = objective.evaluate(Pose6DoF{p.tx, p.ty, p.tz + 1e-3, p.rx, p.ry, p.rz}).total;
    const double down = objective.evaluate(Pose6DoF{p.tx, p.ty, p.tz - 1e-3, p.rx, p.ry, p.rz}).total;
    const double g = pose_gradient(objective, p, 1e-3)[2];
    CHECK((g > 0) == (d > 0));
    CHECK((g > 0) == (up > down));
  }
}

TEST_CASE("a start 10 degrees off ends finite or flagged") {
  const Scene sc = make_scene({0.5, -0.3, 0.2, 0, 1.0 * kDeg, 0.5 * kDeg});
  OptimConfig c = quick_config();
  c.init_pose = Pose6DoF{0, 0, 0, 10 * kDeg, 0, 0};
  const OptimResult r = estimate_pose(sc.inputs, c, LossWeights::paper());
  CHECK((r.diverged || r.final_loss().finite()));
  for (const double v : r.pose().to_array()) CHECK(std::isfinite(v));
}

namespace {

// Frames 0 and 10 of a 30 fps video: enough eye rotation for depth to matter.
Scene video_scene(int w, int h) {
  static const EyeModel model = EyeModel::make_default(7);
  const Intrinsics k = default_synthetic_intrinsics(w, h);
  const auto traj = video_trajectory(11, 30.0, 20.0, 3.0, 100);
  const SceneSample t = render(model, traj[0], k), s = render(model, traj[10], k);
  Scene out;
  out.inputs = PairInputs{t.frame, t.seg, t.depth, {SourceView{s.frame, s.seg}}, k};
  out.truth = relative_pose(t, s);
  return out;
}

}  // namespace

TEST_CASE("two-sphere refinement recovers a 10% sclera radius error") {
  const Scene sc = video_scene(128, 96);
  const EyeSpheres truth = spheres_in_camera(EyeModel::make_default(7), video_trajectory(2, 30.0, 20.0, 3.0, 100)[0]);
  const std::vector<Pose6DoF> poses{sc.truth};
  OptimConfig c;
  c.max_iters = 60;
  for (const double factor : {1.0, 1.1}) {
    DepthRefineOptions o;
    o.initial_spheres = truth;
    o.initial_spheres->sclera.r *= factor;
    const DepthRefineResult r =
        refine_depth(sc.inputs, poses, DepthParametrization::two_sphere, c, LossWeights::synthetic(), o);
    CHECK_FALSE(r.diverged);
    CHECK(std::abs(r.spheres.sclera.r / truth.sclera.r - 1.0) < 0.02);
    CHECK(std::abs(r.spheres.cornea.r / truth.cornea.r - 1.0) < 0.02);
  }
}

TEST_CASE("per-pixel offsets flatten a depth bump") {
  Scene sc = video_scene(64, 48);
  const DepthMap truth = sc.inputs.target_depth;
  const Intrinsics& k = sc.inputs.k;
  const double bx = 0.3 * k.width, by = 0.6 * k.height, sigma = 0.1 * k.width;
  auto near_bump = [&](int x, int y) { return std::hypot(x - bx, y - by) <= sigma; };
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x)
      sc.inputs.target_depth(x, y) += 1.5 * std::exp(-(std::pow(x - bx, 2) + std::pow(y - by, 2)) / (2 * sigma * sigma));
  OptimConfig c;
  c.max_iters = 60;
  DepthRefineOptions o;
  o.offset_base = OffsetBase::supplied;
  const std::vector<Pose6DoF> poses{sc.truth};
  const DepthRefineResult r =
      refine_depth(sc.inputs, poses, DepthParametrization::per_pixel_offset, c, LossWeights::synthetic(), o);
  double before = 0, after = 0;
  int n = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      if (sc.inputs.target_seg(x, y) == Label::eyelid || !near_bump(x, y)) continue;
      before += std::abs(sc.inputs.target_depth(x, y) - truth(x, y));
      after += std::abs(r.depth(x, y) - truth(x, y));
      ++n;
    }
  REQUIRE(n > 50);
  CHECK(before / n > 1.0);
  CHECK(after / n < 0.5);
}

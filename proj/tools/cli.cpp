#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "ocumap/camera.hpp"
#include "ocumap/config.hpp"
#include "ocumap/errors.hpp"
#include "ocumap/evalreg.hpp"
#include "ocumap/imaging.hpp"
#include "ocumap/io.hpp"
#include "ocumap/losses.hpp"
#include "ocumap/optim.hpp"
#include "ocumap/spherefit.hpp"
#include "ocumap/synth.hpp"
#include "ocumap/warp.hpp"

namespace fs = std::filesystem;

namespace ocumap::cli {
namespace {

// Built-in defaults, shared by --help and the config lookups.
namespace defaults {
constexpr long seed = 1;
constexpr long frames = 21;
constexpr long width = 128;
constexpr long height = 96;
constexpr double fps = 30.0;
constexpr double angular_speed = 20.0;  // deg/s
constexpr double drift_speed = 3.0;     // mm/s
constexpr double distance = 50.0;       // mm
constexpr long supersamples = 2;
constexpr const char* lighting = "camera";
constexpr const char* weights_profile = "paper";
constexpr long frame_step = 10;
constexpr double srl_filter_percent = 5.0;
constexpr const char* depth_mode = "none";
constexpr long rounds = 1;
constexpr const char* region = "cornea";
}  // namespace defaults

struct Failure : std::runtime_error {
  Failure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

[[noreturn]] void fail(int code, const std::string& message) { throw Failure(code, message); }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string index_name(long i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04ld", i);
  return buf;
}

fs::path frame_path(const fs::path& dir, long i) { return dir / ("frame_" + index_name(i) + ".ppm"); }
fs::path seg_path(const fs::path& dir, long i) { return dir / ("seg_" + index_name(i) + ".pgm"); }
fs::path depth_path(const fs::path& dir, long i) { return dir / ("depth_" + index_name(i) + ".odpt"); }

void require_file(const fs::path& path, const std::string& what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) fail(kMissingInput, what + " not found: " + path.string());
}

// Input readers: any read or parse problem becomes kMissingInput.
template <class F>
auto load(const fs::path& path, const std::string& what, F&& reader) {
  require_file(path, what);
  try {
    return reader(path);
  } catch (const IoError& e) {
    fail(kMissingInput, "cannot read " + what + " " + path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    fail(kMissingInput, "malformed " + what + " " + path.string() + ": " + e.what());
  } catch (const DomainError& e) {
    fail(kMissingInput, "invalid " + what + " " + path.string() + ": " + e.what());
  }
}

template <class F>
void save(const fs::path& path, F&& writer) {
  try {
    writer(path);
  } catch (const IoError& e) {
    fail(kUnwritable, "cannot write " + path.string() + ": " + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    fail(kUnwritable, "cannot write " + path.string() + ": " + e.what());
  }
}

void save_text(const fs::path& path, const std::string& text) {
  save(path, [&](const fs::path& p) { write_text(p, text); });
}

fs::path prepare_output_dir(const std::string& dir) {
  const fs::path path(dir);
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec || !fs::is_directory(path)) {
    fail(kUnwritable, "cannot create output directory " + dir + (ec ? ": " + ec.message() : ""));
  }
  return path;
}

// Flags that override config keys. The string slots live in a std::map so
// their addresses stay valid while CLI11 writes into them.
struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key,
                   const std::string& help, const std::string& shown_default = "") {
    CLI::Option* opt = app->add_option(flag, values[key], help);
    if (!shown_default.empty()) opt->default_str(shown_default);
    options.emplace_back(key, opt);
    return opt;
  }

  void apply(KeyValueConfig& config) const {
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) config.set(key, values.at(key));
    }
  }
};

std::string shown(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void merge_into(KeyValueConfig& base, const KeyValueConfig& over) {
  for (const std::string& key : over.keys()) base.set(key, *over.get(key));
}

KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return load(path, "config", [](const fs::path& p) { return KeyValueConfig::load(p); });
}

// fx, fy, cx and cy must come from the configuration; the size defaults to the
// raster size and must agree with it.
Intrinsics require_intrinsics(const KeyValueConfig& config, int width, int height) {
  for (const char* key : {"fx", "fy", "cx", "cy"}) {
    if (!config.contains(key)) {
      fail(kUsage, std::string("camera intrinsics missing: set ") + key + " in the --config file");
    }
  }
  Intrinsics base;
  base.width = width;
  base.height = height;
  const Intrinsics k = intrinsics_from_config(config, base);
  if (k.width != width || k.height != height) {
    fail(kUsage, "configured image size " + std::to_string(k.width) + "x" +
                     std::to_string(k.height) + " differs from the input " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
  return k;
}

LossWeights weights_of(const KeyValueConfig& config) {
  const std::string profile = config.get_or("weights_profile", defaults::weights_profile);
  return weights_from_config(config, weights_profile(profile));
}

std::vector<Pose6DoF> read_poses(const fs::path& path) {
  return load(path, "pose file", [](const fs::path& p) {
    std::istringstream in(read_text(p));
    std::vector<Pose6DoF> poses;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream fields(line);
      std::array<double, 6> v{};
      std::size_t n = 0;
      double x = 0.0;
      while (n < 7 && fields >> x) {
        if (n < 6) v[n] = x;
        ++n;
      }
      if (n != 6 || !(fields >> std::ws).eof()) {
        throw ParseError("line " + std::to_string(line_no) + ": expected 6 numbers");
      }
      poses.push_back(Pose6DoF::from_array(v));
    }
    if (poses.empty()) throw ParseError("no poses");
    return poses;
  });
}

std::string pose_line(const Pose6DoF& pose) {
  const auto v = pose.to_array();
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += num(v[i]);
  }
  return s + '\n';
}

std::string loss_trace_csv(const std::vector<LossReport>& trace) {
  std::string s = "iteration,srl,recon,ssim,ds,sfl,total,valid_pixels\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const LossReport& r = trace[i];
    s += std::to_string(i) + ',' + num(r.srl) + ',' + num(r.recon) + ',' + num(r.ssim) + ',' +
         num(r.ds) + ',' + num(r.sfl()) + ',' + num(r.total) + ',' +
         std::to_string(r.valid_pixel_count) + '\n';
  }
  return s;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string config;
  std::string output_dir;
  Overrides flags;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  CLI::App* cmd = app.add_subcommand(
      "synth", "Render a synthetic two-sphere eye sequence with ground truth");
  cmd->add_option("--config", a.config, "Key = value configuration file");
  cmd->add_option("--output-dir", a.output_dir, "Directory for the scene files")->required();
  a.flags.add(cmd, "--seed", "seed", "Texture and trajectory seed", std::to_string(defaults::seed))
      ->check(CLI::NonNegativeNumber);
  a.flags.add(cmd, "--frames", "frames", "Number of frames", std::to_string(defaults::frames))
      ->check(CLI::PositiveNumber);
  a.flags.add(cmd, "--width", "width", "Image width (px)", std::to_string(defaults::width))
      ->check(CLI::PositiveNumber);
  a.flags.add(cmd, "--height", "height", "Image height (px)", std::to_string(defaults::height))
      ->check(CLI::PositiveNumber);
  a.flags.add(cmd, "--fps", "fps", "Frame rate", shown(defaults::fps))->check(CLI::PositiveNumber);
  a.flags.add(cmd, "--angular-speed", "angular_speed", "Eye rotation speed (deg/s)",
              shown(defaults::angular_speed))
      ->check(CLI::Number);
  a.flags.add(cmd, "--drift-speed", "drift_speed", "Head drift speed (mm/s)",
              shown(defaults::drift_speed))
      ->check(CLI::Number);
  a.flags.add(cmd, "--distance", "distance", "Camera distance from the eye centre (mm)",
              shown(defaults::distance))
      ->check(CLI::PositiveNumber);
  a.flags.add(cmd, "--lighting", "lighting", "Light source: camera (moves with it) or world",
              defaults::lighting)
      ->check(CLI::IsMember({"camera", "world"}));
  a.flags.add(cmd, "--supersamples", "supersamples", "Colour supersamples per pixel axis",
              std::to_string(defaults::supersamples))
      ->check(CLI::PositiveNumber);
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  KeyValueConfig config = load_config(a.config);
  a.flags.apply(config);

  const long seed = config.get_int_or("seed", defaults::seed);
  const long frames = config.get_int_or("frames", defaults::frames);
  const long width = config.get_int_or("width", defaults::width);
  const long height = config.get_int_or("height", defaults::height);
  if (seed < 0) fail(kUsage, "seed must be non-negative");
  if (frames < 2) fail(kUsage, "need at least 2 frames");
  if (width < 8 || height < 8) fail(kUsage, "image must be at least 8x8");

  const Intrinsics k = intrinsics_from_config(
      config, default_synthetic_intrinsics(static_cast<int>(width), static_cast<int>(height)));

  RenderOptions render_options;
  const std::string lighting = config.get_or("lighting", defaults::lighting);
  if (lighting != "camera" && lighting != "world") {
    fail(kUsage, "lighting must be camera or world, got " + lighting);
  }
  render_options.light.camera_attached = lighting == "camera";
  render_options.supersamples =
      static_cast<int>(config.get_int_or("supersamples", defaults::supersamples));

  const auto useed = static_cast<std::uint64_t>(seed);
  const EyeModel model = EyeModel::make_default(useed);
  const std::vector<Pose6DoF> trajectory = video_trajectory(
      static_cast<int>(frames), config.get_double_or("fps", defaults::fps),
      config.get_double_or("angular_speed", defaults::angular_speed),
      config.get_double_or("drift_speed", defaults::drift_speed), useed,
      default_camera_pose(config.get_double_or("distance", defaults::distance)));

  const fs::path dir = prepare_output_dir(a.output_dir);
  const std::vector<Landmark> marks = landmarks(model);
  AnnotationSet annotations;
  std::string poses;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const long idx = static_cast<long>(i);
    const SceneSample s = render(model, trajectory[i], k, render_options);
    save(frame_path(dir, idx), [&](const fs::path& p) { write_frame(p, s.frame); });
    save(depth_path(dir, idx),
         [&](const fs::path& p) { write_depth(p, s.depth, DepthPrecision::float64); });
    save(seg_path(dir, idx), [&](const fs::path& p) { write_segmap(p, s.seg); });
    poses += pose_line(trajectory[i]);
    for (const Landmark& m : marks) {
      if (const auto px = observe(model, trajectory[i], k, m.point)) {
        annotations.add(index_name(idx), {m.id, *px, m.region});
      }
    }
  }
  save_text(dir / "poses.txt", poses);
  save_text(dir / "annotations.csv", annotations.to_csv());

  KeyValueConfig camera;
  camera.set("fx", num(k.fx));
  camera.set("fy", num(k.fy));
  camera.set("cx", num(k.cx));
  camera.set("cy", num(k.cy));
  camera.set("width", std::to_string(k.width));
  camera.set("height", std::to_string(k.height));
  save_text(dir / "camera.cfg", camera.to_string());

  out << "wrote " << trajectory.size() << " frames, " << annotations.size()
      << " annotations to " << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- fit-sphere

struct FitArgs {
  std::string config;
  std::string output_dir;
  std::string depth;
  std::string segmap;
  std::string region = defaults::region;
};

void add_fit(CLI::App& app, FitArgs& a) {
  CLI::App* cmd =
      app.add_subcommand("fit-sphere", "Least-squares sphere through one labelled region");
  cmd->add_option("--config", a.config, "Configuration file with fx, fy, cx, cy")->required();
  cmd->add_option("--depth", a.depth, "Depth raster (.odpt)")->required();
  cmd->add_option("--segmap", a.segmap, "Label map (.pgm)")->required();
  cmd->add_option("--region", a.region, "Region to fit")
      ->capture_default_str()
      ->check(CLI::IsMember({"cornea", "sclera"}));
  cmd->add_option("--output-dir", a.output_dir, "Also write sphere.txt here");
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const KeyValueConfig config = load_config(a.config);
  const DepthMap depth = load(a.depth, "depth", [](const fs::path& p) { return read_depth(p); });
  const SegMap seg = load(a.segmap, "segmap", [](const fs::path& p) { return read_segmap(p); });
  if (seg.width() != depth.width() || seg.height() != depth.height()) {
    fail(kUsage, "segmap size differs from depth");
  }
  const Intrinsics k = require_intrinsics(config, depth.width(), depth.height());
  const Label label = a.region == "cornea" ? Label::cornea : Label::sclera;

  const PointCloud cloud = region_cloud(depth, seg, k, label);
  const SphereParams s = fit_sphere(cloud);

  KeyValueConfig result;
  result.set("region", a.region);
  result.set("x0", num(s.x0));
  result.set("y0", num(s.y0));
  result.set("z0", num(s.z0));
  result.set("r", num(s.r));
  result.set("rms_residual", num(s.rms_residual));
  result.set("points", std::to_string(cloud.size()));
  const std::string text = result.to_string();
  if (!a.output_dir.empty()) save_text(prepare_output_dir(a.output_dir) / "sphere.txt", text);
  out << text;
  return kOk;
}

// ---------------------------------------------------------------- pair inputs

struct PairArgs {
  std::string config;
  std::string output_dir;
  std::string sequence;
  std::string target;
  std::string target_seg;
  std::string target_depth;
  std::vector<std::string> sources;
  std::vector<std::string> source_segs;
  Overrides flags;
};

void add_pair_options(CLI::App* cmd, PairArgs& a) {
  cmd->add_option("--config", a.config, "Key = value configuration file");
  cmd->add_option("--output-dir", a.output_dir, "Directory for the results")->required();
  cmd->add_option("--sequence", a.sequence,
                  "Scene directory written by synth (frame_NNNN.ppm, seg_NNNN.pgm, "
                  "depth_NNNN.odpt, camera.cfg)");
  a.flags.add(cmd, "--target-index", "target_index", "Target frame index in --sequence")
      ->check(CLI::NonNegativeNumber);
  a.flags.add(cmd, "--frame-step", "frame_step", "Source = target index + frame step",
              std::to_string(defaults::frame_step))
      ->check(CLI::PositiveNumber);
  cmd->add_option("--target", a.target, "Target frame (.ppm)");
  cmd->add_option("--target-seg", a.target_seg, "Target label map (.pgm)");
  cmd->add_option("--target-depth", a.target_depth, "Target depth (.odpt)");
  cmd->add_option("--source", a.sources, "Source frame (.ppm), repeatable");
  cmd->add_option("--source-seg", a.source_segs, "Source label map (.pgm), repeatable");
  a.flags.add(cmd, "--weights-profile", "weights_profile",
              "Loss weights: paper (SRL 0.85, L1 0.15, SSIM 0.15, DS 0.04, SFL 10000), "
              "synthetic (paper weights, presence threshold 0.1) or baseline",
              defaults::weights_profile)
      ->check(CLI::IsMember({"paper", "synthetic", "baseline"}));
  a.flags.add(cmd, "--sfl-threshold", "sfl_threshold",
              "Region presence needed for a sphere-fit term (profile value when unset)", "0.5")
      ->check(CLI::Range(0.0, 1.0));
  a.flags.add(cmd, "--max-iters", "max_iters", "Optimizer iterations per start", "60")
      ->check(CLI::NonNegativeNumber);
  a.flags.add(cmd, "--multi-start", "multi_start", "Number of initializations", "5")
      ->check(CLI::PositiveNumber);
  a.flags.add(cmd, "--pyramid-levels", "pyramid_levels", "Coarse-to-fine levels", "1")
      ->check(CLI::PositiveNumber);
}

struct Pair {
  PairInputs inputs;
  std::string target_id;
  std::vector<std::string> source_ids;
};

// The configuration stack: sequence camera.cfg, then --config, then flags.
KeyValueConfig pair_config(const PairArgs& a) {
  KeyValueConfig config;
  if (!a.sequence.empty()) {
    merge_into(config, load(fs::path(a.sequence) / "camera.cfg", "sequence camera config",
                            [](const fs::path& p) { return KeyValueConfig::load(p); }));
  }
  merge_into(config, load_config(a.config));
  a.flags.apply(config);
  return config;
}

Pair load_pair(const fs::path& target, const fs::path& target_seg, const fs::path& target_depth,
               const std::vector<fs::path>& sources, const std::vector<fs::path>& source_segs,
               const KeyValueConfig& config) {
  Pair pair;
  require_file(target, "target frame");
  require_file(target_seg, "target segmap");
  require_file(target_depth, "target depth");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    require_file(sources[i], "source frame");
    require_file(source_segs[i], "source segmap");
  }
  PairInputs& in = pair.inputs;
  in.target = load(target, "target frame", [](const fs::path& p) { return read_frame(p); });
  in.target_seg = load(target_seg, "target segmap", [](const fs::path& p) { return read_segmap(p); });
  in.target_depth = load(target_depth, "target depth", [](const fs::path& p) { return read_depth(p); });
  for (std::size_t i = 0; i < sources.size(); ++i) {
    SourceView v;
    v.frame = load(sources[i], "source frame", [](const fs::path& p) { return read_frame(p); });
    v.seg = load(source_segs[i], "source segmap", [](const fs::path& p) { return read_segmap(p); });
    in.sources.push_back(std::move(v));
    pair.source_ids.push_back(sources[i].stem().string());
  }
  pair.target_id = target.stem().string();
  in.k = require_intrinsics(config, in.target.width(), in.target.height());
  try {
    in.validate();
  } catch (const DomainError& e) {
    fail(kUsage, std::string("inconsistent inputs: ") + e.what());
  }
  return pair;
}

long sequence_length(const fs::path& dir) {
  long n = 0;
  std::error_code ec;
  while (fs::is_regular_file(frame_path(dir, n), ec)) ++n;
  return n;
}

Pair sequence_pair(const fs::path& dir, long target, long step, const KeyValueConfig& config) {
  Pair pair = load_pair(frame_path(dir, target), seg_path(dir, target), depth_path(dir, target),
                        {frame_path(dir, target + step)}, {seg_path(dir, target + step)}, config);
  pair.target_id = index_name(target);
  pair.source_ids = {index_name(target + step)};
  return pair;
}

// Pairs named by the flags: one sequence pair, every sequence pair when no
// target index is given, or explicit files.
std::vector<Pair> resolve_pairs(const PairArgs& a, const KeyValueConfig& config, bool allow_all) {
  const bool explicit_files = !a.target.empty() || !a.sources.empty();
  if (!a.sequence.empty()) {
    if (explicit_files) fail(kUsage, "--sequence cannot be combined with --target/--source");
    const fs::path dir(a.sequence);
    const long n = sequence_length(dir);
    const long step = config.get_int_or("frame_step", defaults::frame_step);
    if (step < 1) fail(kUsage, "frame_step must be positive");
    std::vector<Pair> pairs;
    if (const auto t = config.get_int("target_index")) {
      if (*t < 0 || *t + step >= n) {
        fail(kMissingInput, "sequence " + dir.string() + " has no frames " + index_name(*t) +
                                " and " + index_name(*t + step));
      }
      pairs.push_back(sequence_pair(dir, *t, step, config));
    } else {
      if (!allow_all) fail(kUsage, "--target-index is required with --sequence");
      if (n <= step) {
        fail(kMissingInput, "sequence " + dir.string() + " has too few frames for step " +
                                std::to_string(step));
      }
      for (long t = 0; t + step < n; ++t) pairs.push_back(sequence_pair(dir, t, step, config));
    }
    return pairs;
  }
  if (a.target.empty() || a.target_seg.empty() || a.target_depth.empty()) {
    fail(kUsage, "give --sequence or all of --target, --target-seg, --target-depth");
  }
  if (a.sources.empty() || a.sources.size() != a.source_segs.size()) {
    fail(kUsage, "give one --source-seg per --source (at least one source)");
  }
  std::vector<fs::path> sources(a.sources.begin(), a.sources.end());
  std::vector<fs::path> segs(a.source_segs.begin(), a.source_segs.end());
  std::vector<Pair> pairs;
  pairs.push_back(load_pair(a.target, a.target_seg, a.target_depth, sources, segs, config));
  return pairs;
}

// ---------------------------------------------------------------- register

struct RegisterArgs : PairArgs {};

void add_register(CLI::App& app, RegisterArgs& a) {
  CLI::App* cmd = app.add_subcommand(
      "register", "Estimate the target-to-source pose (and optionally refine the depth)");
  add_pair_options(cmd, a);
  a.flags.add(cmd, "--depth-mode", "depth_mode",
              "Depth refinement: none, two-sphere or per-pixel-offset", defaults::depth_mode)
      ->check(CLI::IsMember({"none", "two-sphere", "per-pixel-offset"}));
  a.flags.add(cmd, "--rounds", "rounds", "Pose/depth alternation rounds",
              std::to_string(defaults::rounds))
      ->check(CLI::NonNegativeNumber);
}

DepthRefineOptions depth_options(const KeyValueConfig& config) {
  DepthRefineOptions o;
  o.grid_spacing = static_cast<int>(config.get_int_or("grid_spacing", o.grid_spacing));
  o.offset_bound = config.get_double_or("offset_bound", o.offset_bound);
  o.refine_iters = static_cast<int>(config.get_int_or("refine_iters", o.refine_iters));
  const std::string base = config.get_or("offset_base", "two-sphere");
  if (base == "two-sphere") {
    o.offset_base = OffsetBase::two_sphere;
  } else if (base == "supplied") {
    o.offset_base = OffsetBase::supplied;
  } else {
    fail(kUsage, "offset_base must be two-sphere or supplied, got " + base);
  }
  if (o.grid_spacing < 1 || !(o.offset_bound > 0.0) || o.refine_iters < 0) {
    fail(kUsage, "grid_spacing, offset_bound and refine_iters must be positive");
  }
  return o;
}

int cmd_register(const RegisterArgs& a, std::ostream& out) {
  const KeyValueConfig config = pair_config(a);
  const LossWeights weights = weights_of(config);
  const OptimConfig optim = optim_config_from(config);
  const std::string mode = config.get_or("depth_mode", defaults::depth_mode);
  long rounds = config.get_int_or("rounds", defaults::rounds);
  DepthParametrization parametrization = DepthParametrization::two_sphere;
  if (mode == "none") {
    rounds = 0;
  } else {
    parametrization = parse_depth_parametrization(mode);
  }
  if (rounds < 0) fail(kUsage, "rounds must be non-negative");
  const DepthRefineOptions options = depth_options(config);

  const Pair pair = resolve_pairs(a, config, false).front();
  const fs::path dir = prepare_output_dir(a.output_dir);

  const RegistrationResult reg =
      register_pair(pair.inputs, optim, weights, static_cast<int>(rounds), parametrization, options);
  const OptimResult& pose = reg.pose;

  std::string poses;
  for (const Pose6DoF& p : pose.poses) poses += pose_line(p);
  save_text(dir / "pose.txt", poses);
  save_text(dir / "loss_trace.csv", loss_trace_csv(pose.loss_trace));
  if (rounds > 0) {
    save_text(dir / "depth_trace.csv", loss_trace_csv(reg.depth_trace));
    save(dir / "depth.odpt",
         [&](const fs::path& p) { write_depth(p, reg.depth, DepthPrecision::float64); });
  }

  const PixelMask exclude = eyelid_mask(pair.inputs.target_seg);
  const WarpResult warped = inverse_warp(pair.inputs.sources.front().frame, reg.depth,
                                         pose.pose(), pair.inputs.k, exclude);
  save(dir / "warped.ppm", [&](const fs::path& p) { write_frame(p, Frame(warped.warped)); });
  save(dir / "valid.pgm", [&](const fs::path& p) { write_mask(p, warped.valid); });

  const LossReport& final_loss = pose.final_loss();
  KeyValueConfig result;
  result.set("target", pair.target_id);
  std::string sources;
  for (const std::string& id : pair.source_ids) sources += (sources.empty() ? "" : " ") + id;
  result.set("sources", sources);
  result.set("weights_profile", config.get_or("weights_profile", defaults::weights_profile));
  result.set("depth_mode", mode);
  result.set("rounds", std::to_string(rounds));
  result.set("converged", pose.converged ? "true" : "false");
  result.set("diverged", pose.diverged ? "true" : "false");
  result.set("iterations", std::to_string(pose.iterations_used));
  result.set("start_index", std::to_string(pose.start_index));
  result.set("srl", num(final_loss.srl));
  result.set("srl_percent", num(srl_percent(final_loss.srl)));
  result.set("recon", num(final_loss.recon));
  result.set("ssim", num(final_loss.ssim));
  result.set("ds", num(final_loss.ds));
  result.set("sfl", num(final_loss.sfl()));
  result.set("total", num(final_loss.total));
  result.set("valid_pixels", std::to_string(final_loss.valid_pixel_count));
  save_text(dir / "result.txt", result.to_string());

  out << (pose.diverged ? "diverged" : pose.converged ? "converged" : "stopped") << " after "
      << pose.iterations_used << " iterations, total " << num(final_loss.total) << "\npose "
      << pose_line(pose.pose());
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string config;
  std::string output_dir;
  std::string annotations;
  std::string target_id;
  std::string source_id;
  std::string depth;
  std::string pose;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  CLI::App* cmd = app.add_subcommand(
      "eval", "Track annotated target points into the source frame and score them");
  cmd->add_option("--config", a.config, "Configuration file with fx, fy, cx, cy")->required();
  cmd->add_option("--output-dir", a.output_dir, "Directory for eval.csv and summary.txt")
      ->required();
  cmd->add_option("--annotations", a.annotations, "CSV: frame_id, point_id, u, v, region")
      ->required();
  cmd->add_option("--target-id", a.target_id, "Target frame id in the annotations")->required();
  cmd->add_option("--source-id", a.source_id, "Source frame id in the annotations")->required();
  cmd->add_option("--depth", a.depth, "Target depth (.odpt)")->required();
  cmd->add_option("--pose", a.pose, "Pose file; the first pose maps target to source")
      ->required();
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const KeyValueConfig config = load_config(a.config);
  require_file(a.annotations, "annotations");
  require_file(a.depth, "depth");
  require_file(a.pose, "pose file");
  const AnnotationSet annotations = load(a.annotations, "annotations", [](const fs::path& p) {
    return AnnotationSet::read_csv(p);
  });
  const DepthMap depth = load(a.depth, "depth", [](const fs::path& p) { return read_depth(p); });
  const Pose6DoF pose = read_poses(a.pose).front();
  const Intrinsics k = require_intrinsics(config, depth.width(), depth.height());
  for (const std::string& id : {a.target_id, a.source_id}) {
    if (!annotations.contains(id)) fail(kMissingInput, "no annotations for frame " + id);
  }

  const EvalReport report = evaluate_tracking(annotations, a.target_id, a.source_id, depth, pose, k);
  const fs::path dir = prepare_output_dir(a.output_dir);
  save_text(dir / "eval.csv", report.to_csv());
  save_text(dir / "summary.txt", report.summary());
  out << report.summary();
  return kOk;
}

// ---------------------------------------------------------------- mosaic

struct MosaicArgs : PairArgs {
  std::string pose;
};

void add_mosaic(CLI::App& app, MosaicArgs& a) {
  CLI::App* cmd = app.add_subcommand(
      "mosaic", "Drop pairs whose SRL exceeds the threshold and mosaic the rest");
  add_pair_options(cmd, a);
  cmd->add_option("--pose", a.pose, "Pose file to use instead of registering (single pair only)");
  a.flags.add(cmd, "--srl-filter-percent", "srl_filter_percent",
              "Keep pairs whose SRL is below this percentage of its maximum",
              shown(defaults::srl_filter_percent))
      ->check(CLI::NonNegativeNumber);
}

int cmd_mosaic(const MosaicArgs& a, std::ostream& out) {
  const KeyValueConfig config = pair_config(a);
  const LossWeights weights = weights_of(config);
  const OptimConfig optim = optim_config_from(config);
  const double threshold = config.get_double_or("srl_filter_percent", defaults::srl_filter_percent);
  if (!(threshold >= 0.0)) fail(kUsage, "srl_filter_percent must be non-negative");

  std::optional<Pose6DoF> given;
  if (!a.pose.empty()) given = read_poses(a.pose).front();
  const std::vector<Pair> pairs = resolve_pairs(a, config, !given.has_value());
  const fs::path dir = prepare_output_dir(a.output_dir);

  std::vector<PairScore> scores;
  std::vector<Pose6DoF> poses;
  for (const Pair& pair : pairs) {
    const Pose6DoF pose =
        given ? *given : estimate_pose(pair.inputs, optim, weights).pose();
    const LossReport loss = total_loss(pair.inputs, pose, weights);
    scores.push_back({pair.source_ids.front(), pair.target_id, loss.srl});
    poses.push_back(pose);
  }
  const FilterResult filtered = filter_pairs(scores, threshold);

  const bool single = pairs.size() == 1;
  std::string csv = "target_id,source_id,srl,srl_percent,kept,tx,ty,tz,rx,ry,rz\n";
  std::size_t written = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Pair& pair = pairs[i];
    const bool kept = srl_percent(scores[i].srl) < threshold;
    std::string pose = pose_line(poses[i]);
    pose.pop_back();
    for (char& c : pose) {
      if (c == ' ') c = ',';
    }
    csv += pair.target_id + ',' + pair.source_ids.front() + ',' + num(scores[i].srl) + ',' +
           num(srl_percent(scores[i].srl)) + ',' + (kept ? "1" : "0") + ',' + pose + '\n';
    if (!kept) continue;
    const PixelMask target_valid = eyelid_mask(pair.inputs.target_seg);
    const PixelMask source_valid = eyelid_mask(pair.inputs.sources.front().seg);
    const Mosaic mosaic = build_mosaic(pair.inputs.sources.front().frame, pair.inputs.target,
                                       pair.inputs.target_depth, poses[i], pair.inputs.k,
                                       target_valid, &source_valid);
    const std::string stem =
        single ? "" : "_" + pair.target_id + "_" + pair.source_ids.front();
    save(dir / ("mosaic" + stem + ".ppm"),
         [&](const fs::path& p) { write_frame(p, mosaic.image); });
    save(dir / ("coverage" + stem + ".pgm"),
         [&](const fs::path& p) { write_coverage(p, mosaic); });
    ++written;
  }
  save_text(dir / "pairs.csv", csv);

  KeyValueConfig summary;
  summary.set("pairs", std::to_string(pairs.size()));
  summary.set("kept", std::to_string(filtered.kept.size()));
  summary.set("removed", std::to_string(filtered.removed.size()));
  summary.set("removed_fraction", num(filtered.removed_fraction));
  summary.set("srl_filter_percent", num(threshold));
  save_text(dir / "summary.txt", summary.to_string());
  out << "kept " << filtered.kept.size() << " of " << pairs.size() << " pairs, wrote " << written
      << " mosaics\n";
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic registration of slit-lamp style eye images", "ocumap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ocumap 0.1.0");
  app.footer(
      "Exit codes: 0 ok, 1 usage or invalid configuration, 2 missing or malformed input,\n"
      "3 degenerate geometry, 4 output not writable, 5 internal error.\n"
      "Flags override keys of the --config file.");

  SynthArgs synth;
  FitArgs fit;
  RegisterArgs reg;
  EvalArgs eval;
  MosaicArgs mosaic;
  add_synth(app, synth);
  add_fit(app, fit);
  add_register(app, reg);
  add_eval(app, eval);
  add_mosaic(app, mosaic);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (app.got_subcommand("synth")) return cmd_synth(synth, out);
  if (app.got_subcommand("fit-sphere")) return cmd_fit(fit, out);
  if (app.got_subcommand("register")) return cmd_register(reg, out);
  if (app.got_subcommand("eval")) return cmd_eval(eval, out);
  if (app.got_subcommand("mosaic")) return cmd_mosaic(mosaic, out);
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const Failure& e) {
    err << "ocumap: error: " << e.what() << '\n';
    return e.code;
  } catch (const DegenerateGeometryError& e) {
    err << "ocumap: degenerate geometry: " << e.what() << '\n';
    return kDegenerate;
  } catch (const InsufficientDataError& e) {
    err << "ocumap: degenerate geometry: " << e.what() << '\n';
    return kDegenerate;
  } catch (const ParseError& e) {
    err << "ocumap: error: " << e.what() << '\n';
    return kMissingInput;
  } catch (const DomainError& e) {
    err << "ocumap: error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "ocumap: error: " << e.what() << '\n';
    return kUnwritable;
  } catch (const std::exception& e) {
    err << "ocumap: internal error: " << e.what() << '\n';
    return kInternal;
  }
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace ocumap::cli

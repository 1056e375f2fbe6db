#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "ocumap/config.hpp"
#include "ocumap/evalreg.hpp"
#include "ocumap/io.hpp"

using namespace ocumap;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "ocumap");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const fs::path& root() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("ocumap_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

struct Cleanup {
  ~Cleanup() { fs::remove_all(root()); }
} cleanup;

std::vector<std::string> synth_args(const fs::path& dir) {
  return {"synth", "--output-dir", dir.string(), "--seed", "3",  "--frames",
          "6",     "--width",      "48",         "--height", "36", "--supersamples", "1"};
}

// One small sequence shared by the tests below.
const fs::path& sequence() {
  static const fs::path dir = [] {
    const fs::path p = root() / "seq";
    const Run r = run(synth_args(p));
    REQUIRE(r.code == 0);
    return p;
  }();
  return dir;
}

std::vector<std::string> register_args(const fs::path& out) {
  return {"register",       "--sequence",   sequence().string(), "--output-dir", out.string(),
          "--target-index", "0",            "--frame-step",      "5",            "--multi-start",
          "1",              "--max-iters",  "15"};
}

void same_files(const fs::path& a, const fs::path& b) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::size_t count_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) ++count_b;
  CHECK(names.size() == count_b);
  for (const std::string& n : names) {
    INFO(n);
    REQUIRE(fs::exists(b / n));
    CHECK(read_text(a / n) == read_text(b / n));
  }
}

}  // namespace

TEST_CASE("synth writes a complete sequence") {
  const fs::path& dir = sequence();
  int frames = 0, depths = 0, segs = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    frames += n.rfind("frame_", 0) == 0;
    depths += n.rfind("depth_", 0) == 0;
    segs += n.rfind("seg_", 0) == 0;
  }
  CHECK(frames == 6);
  CHECK(depths == 6);
  CHECK(segs == 6);
  const Frame f = read_frame(dir / "frame_0005.ppm");
  CHECK(f.width() == 48);
  CHECK(f.height() == 36);
  const KeyValueConfig cam = KeyValueConfig::load(dir / "camera.cfg");
  CHECK(cam.get_int_or("width", 0) == 48);
  const AnnotationSet ann = AnnotationSet::read_csv(dir / "annotations.csv");
  CHECK(ann.contains("0000"));
  CHECK_NOTHROW(ann.validate_bounds(48, 36));
  std::istringstream poses(read_text(dir / "poses.txt"));
  std::string line;
  int lines = 0;
  while (std::getline(poses, line)) lines += !line.empty();
  CHECK(lines == 6);
}

TEST_CASE("synth and register are byte-identical on rerun") {
  const fs::path again = root() / "seq_again";
  REQUIRE(run(synth_args(again)).code == 0);
  same_files(sequence(), again);

  const Run a = run(register_args(root() / "reg_a"));
  const Run b = run(register_args(root() / "reg_b"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  same_files(root() / "reg_a", root() / "reg_b");
}

TEST_CASE("fit-sphere recovers the rendered cornea") {
  const fs::path& dir = sequence();
  const Run r = run({"fit-sphere", "--config", (dir / "camera.cfg").string(), "--depth",
                     (dir / "depth_0000.odpt").string(), "--segmap", (dir / "seg_0000.pgm").string(),
                     "--output-dir", (root() / "fit").string()});
  REQUIRE(r.code == 0);
  const KeyValueConfig kv = KeyValueConfig::parse(r.out);
  // Frame 0 looks straight at the eye from 50 mm; the cornea centre sits
  // 5 mm in front of the eye centre.
  CHECK(std::abs(kv.get_double_or("x0", 1e9)) < 1e-6);
  CHECK(std::abs(kv.get_double_or("y0", 1e9)) < 1e-6);
  CHECK(std::abs(kv.get_double_or("z0", 1e9) - 45.0) < 1e-6);
  CHECK(std::abs(kv.get_double_or("r", 1e9) - 7.8) < 1e-6);
  CHECK(read_text(root() / "fit" / "sphere.txt") == r.out);
}

TEST_CASE("register, eval and mosaic run end to end") {
  const fs::path reg = root() / "reg_e2e";
  REQUIRE(run(register_args(reg)).code == 0);
  for (const char* f : {"pose.txt", "loss_trace.csv", "warped.ppm", "valid.pgm", "result.txt"}) {
    CHECK(fs::exists(reg / f));
  }
  const fs::path& seq = sequence();
  const Run e = run({"eval", "--config", (seq / "camera.cfg").string(), "--output-dir",
                     (root() / "eval").string(), "--annotations", (seq / "annotations.csv").string(),
                     "--target-id", "0000", "--source-id", "0005", "--depth",
                     (seq / "depth_0000.odpt").string(), "--pose", (reg / "pose.txt").string()});
  CHECK(e.code == 0);
  CHECK(fs::exists(root() / "eval" / "eval.csv"));
  CHECK(read_text(root() / "eval" / "summary.txt").find("mean error") != std::string::npos);

  const Run m = run({"mosaic", "--sequence", seq.string(), "--output-dir", (root() / "mos").string(),
                     "--frame-step", "5", "--multi-start", "1", "--max-iters", "10"});
  CHECK(m.code == 0);
  CHECK(read_text(root() / "mos" / "pairs.csv").rfind("target_id,source_id,srl", 0) == 0);
}

TEST_CASE("exit codes") {
  const fs::path& seq = sequence();
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"bogus"}).code == cli::kUsage);
  CHECK(run({"synth"}).code == cli::kUsage);
  CHECK(run({"synth", "--output-dir", (root() / "x").string(), "--lighting", "moon"}).code ==
        cli::kUsage);

  const Run missing = run({"fit-sphere", "--config", (seq / "camera.cfg").string(), "--depth",
                           (root() / "nope.odpt").string(), "--segmap", (seq / "seg_0000.pgm").string()});
  CHECK(missing.code == cli::kMissingInput);
  CHECK_FALSE(missing.err.empty());

  // A flat depth map puts the whole cornea on a plane.
  write_depth(root() / "flat.odpt", DepthMap(48, 36, 40.0), DepthPrecision::float64);
  CHECK(run({"fit-sphere", "--config", (seq / "camera.cfg").string(), "--depth",
             (root() / "flat.odpt").string(), "--segmap", (seq / "seg_0000.pgm").string()})
            .code == cli::kDegenerate);
  write_segmap(root() / "lid.pgm", SegMap(48, 36, Label::eyelid));
  CHECK(run({"fit-sphere", "--config", (seq / "camera.cfg").string(), "--depth",
             (seq / "depth_0000.odpt").string(), "--segmap", (root() / "lid.pgm").string()})
            .code == cli::kDegenerate);

  write_text(root() / "file", "x");
  CHECK(run({"synth", "--output-dir", (root() / "file" / "sub").string(), "--frames", "2", "--width",
             "16", "--height", "12"})
            .code == cli::kUnwritable);
}

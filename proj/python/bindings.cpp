#include <cstdint>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/eigen.h>

#include "ocumap/camera.hpp"
#include "ocumap/errors.hpp"
#include "ocumap/evalreg.hpp"
#include "ocumap/losses.hpp"
#include "ocumap/optim.hpp"
#include "ocumap/spherefit.hpp"
#include "ocumap/synth.hpp"

#ifdef OCUMAP_WITH_CLI
#include "cli.hpp"
#endif

namespace py = pybind11;
using namespace ocumap;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Image& image) {
  std::vector<py::ssize_t> shape{image.height(), image.width()};
  if (image.channels() != 1) shape.push_back(image.channels());
  py::array_t<double> out(shape);
  const auto data = image.data();
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> to_numpy(const SegMap& seg) {
  py::array_t<std::uint8_t> out({seg.height(), seg.width()});
  auto* dst = out.mutable_data();
  for (const Label l : seg.labels()) *dst++ = static_cast<std::uint8_t>(l);
  return out;
}

py::array_t<bool> to_numpy(const PixelMask& mask) {
  py::array_t<bool> out({mask.height(), mask.width()});
  auto* dst = out.mutable_data();
  for (const std::uint8_t b : mask.bits()) *dst++ = b != 0;
  return out;
}

Image image_from(const Array& a, int channels) {
  if (channels == 1 ? a.ndim() != 2 : (a.ndim() != 3 || a.shape(2) != channels)) {
    throw py::value_error("expected an array of shape (height, width" +
                          (channels == 1 ? std::string(")") : ", " + std::to_string(channels) + ")"));
  }
  Image image(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), channels);
  std::copy(a.data(), a.data() + a.size(), image.data().begin());
  return image;
}

Frame frame_from(const Array& a) { return Frame(image_from(a, 3)); }
DepthMap depth_from(const Array& a) { return DepthMap(image_from(a, 1)); }

SegMap seg_from(const LabelArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a label array of shape (height, width)");
  SegMap seg(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  const std::uint8_t* src = a.data();
  for (int y = 0; y < seg.height(); ++y) {
    for (int x = 0; x < seg.width(); ++x) {
      const std::uint8_t v = *src++;
      if (v > 2) throw py::value_error("labels must be 0 (eyelid), 1 (sclera) or 2 (cornea)");
      seg.set(x, y, static_cast<Label>(v));
    }
  }
  return seg;
}

PairInputs pair_from(const Array& target, const LabelArray& target_seg, const Array& target_depth,
                     const Array& source, const LabelArray& source_seg, const Intrinsics& k) {
  PairInputs in;
  in.target = frame_from(target);
  in.target_seg = seg_from(target_seg);
  in.target_depth = depth_from(target_depth);
  in.sources.push_back({frame_from(source), seg_from(source_seg)});
  in.k = k;
  in.validate();
  return in;
}

std::string pose_repr(const Pose6DoF& p) {
  std::ostringstream s;
  s.precision(17);
  s << "Pose6DoF(tx=" << p.tx << ", ty=" << p.ty << ", tz=" << p.tz << ", rx=" << p.rx
    << ", ry=" << p.ry << ", rz=" << p.rz << ")";
  return s.str();
}

}  // namespace

PYBIND11_MODULE(_ocumap, m) {
  m.doc() = "Semantic registration of eye images: warping, losses, pose estimation.";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_ValueError);
  py::register_exception<DegenerateGeometryError>(m, "DegenerateGeometryError", PyExc_ValueError);

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             Intrinsics k{fx, fy, cx, cy, width, height};
             k.validate();
             return k;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
           py::arg("height"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height)
      .def("scaled", &Intrinsics::scaled)
      .def("matrix", &Intrinsics::matrix);

  py::class_<Pose6DoF>(m, "Pose6DoF")
      .def(py::init([](double tx, double ty, double tz, double rx, double ry, double rz) {
             return Pose6DoF{tx, ty, tz, rx, ry, rz};
           }),
           py::arg("tx") = 0.0, py::arg("ty") = 0.0, py::arg("tz") = 0.0, py::arg("rx") = 0.0,
           py::arg("ry") = 0.0, py::arg("rz") = 0.0)
      .def_readwrite("tx", &Pose6DoF::tx)
      .def_readwrite("ty", &Pose6DoF::ty)
      .def_readwrite("tz", &Pose6DoF::tz)
      .def_readwrite("rx", &Pose6DoF::rx)
      .def_readwrite("ry", &Pose6DoF::ry)
      .def_readwrite("rz", &Pose6DoF::rz)
      .def("rotation", &Pose6DoF::rotation)
      .def("apply", &Pose6DoF::apply)
      .def("to_list", [](const Pose6DoF& p) {
        const auto a = p.to_array();
        return std::vector<double>(a.begin(), a.end());
      })
      .def("__repr__", &pose_repr)
      .def(py::self == py::self);

  m.def("compose", &compose, py::arg("a"), py::arg("b"));
  m.def("invert", &invert);
  m.def("rotation_distance", &rotation_distance);
  m.def("translation_distance", &translation_distance);

  py::class_<SphereParams>(m, "SphereParams")
      .def_readonly("x0", &SphereParams::x0)
      .def_readonly("y0", &SphereParams::y0)
      .def_readonly("z0", &SphereParams::z0)
      .def_readonly("r", &SphereParams::r)
      .def_readonly("rms_residual", &SphereParams::rms_residual)
      .def("center", &SphereParams::center);

  m.def(
      "fit_sphere",
      [](const Array& points) {
        if (points.ndim() != 2 || points.shape(1) != 3) {
          throw py::value_error("expected an (n, 3) array");
        }
        std::vector<Vec3> pts(static_cast<std::size_t>(points.shape(0)));
        const double* p = points.data();
        for (auto& v : pts) {
          v = Vec3(p[0], p[1], p[2]);
          p += 3;
        }
        return fit_sphere(pts);
      },
      py::arg("points"));

  py::class_<LossWeights>(m, "LossWeights")
      .def(py::init<>())
      .def_readwrite("alpha_srl", &LossWeights::alpha_srl)
      .def_readwrite("alpha_recon", &LossWeights::alpha_recon)
      .def_readwrite("alpha_ssim", &LossWeights::alpha_ssim)
      .def_readwrite("alpha_ds", &LossWeights::alpha_ds)
      .def_readwrite("alpha_sfl", &LossWeights::alpha_sfl)
      .def_readwrite("sfl_threshold", &LossWeights::sfl_threshold);
  m.def("weights_profile", [](const std::string& name) { return weights_profile(name); },
        py::arg("name") = "paper");

  py::class_<LossReport>(m, "LossReport")
      .def_readonly("srl", &LossReport::srl)
      .def_readonly("recon", &LossReport::recon)
      .def_readonly("ssim", &LossReport::ssim)
      .def_readonly("ds", &LossReport::ds)
      .def_readonly("sfl_cornea", &LossReport::sfl_cornea)
      .def_readonly("sfl_sclera", &LossReport::sfl_sclera)
      .def_readonly("total", &LossReport::total)
      .def_readonly("valid_pixel_count", &LossReport::valid_pixel_count)
      .def_property_readonly("sfl", &LossReport::sfl);

  m.def("default_camera_pose", &default_camera_pose, py::arg("distance") = 50.0);
  m.def("default_synthetic_intrinsics", &default_synthetic_intrinsics, py::arg("width") = 128,
        py::arg("height") = 96);
  m.def("video_trajectory", &video_trajectory, py::arg("frames"), py::arg("fps"),
        py::arg("angular_speed"), py::arg("drift_speed"), py::arg("seed"),
        py::arg("base") = default_camera_pose());

  m.def(
      "render",
      [](std::uint64_t seed, const Pose6DoF& camera_from_world, const Intrinsics& k,
         bool camera_attached, int supersamples) {
        RenderOptions options;
        options.light.camera_attached = camera_attached;
        options.supersamples = supersamples;
        const SceneSample s = render(EyeModel::make_default(seed), camera_from_world, k, options);
        py::dict out;
        out["frame"] = to_numpy(s.frame);
        out["depth"] = to_numpy(s.depth);
        out["seg"] = to_numpy(s.seg);
        out["hit"] = to_numpy(s.hit);
        out["pose"] = s.pose;
        return out;
      },
      py::arg("seed"), py::arg("camera_from_world"), py::arg("intrinsics"),
      py::arg("camera_attached") = true, py::arg("supersamples") = 2,
      "Renders the default eye model; returns frame (h, w, 3), depth (h, w), seg (h, w), hit "
      "and pose.");

  m.def(
      "total_loss",
      [](const Array& target, const LabelArray& target_seg, const Array& target_depth,
         const Array& source, const LabelArray& source_seg, const Intrinsics& k,
         const Pose6DoF& pose, const LossWeights& weights) {
        return total_loss(pair_from(target, target_seg, target_depth, source, source_seg, k), pose,
                          weights);
      },
      py::arg("target"), py::arg("target_seg"), py::arg("target_depth"), py::arg("source"),
      py::arg("source_seg"), py::arg("intrinsics"), py::arg("pose"),
      py::arg("weights") = LossWeights::paper());

  m.def(
      "estimate_pose",
      [](const Array& target, const LabelArray& target_seg, const Array& target_depth,
         const Array& source, const LabelArray& source_seg, const Intrinsics& k,
         const LossWeights& weights, int max_iters, int multi_start, int pyramid_levels) {
        OptimConfig config;
        config.max_iters = max_iters;
        config.multi_start = multi_start;
        config.pyramid_levels = pyramid_levels;
        const PairInputs in = pair_from(target, target_seg, target_depth, source, source_seg, k);
        OptimResult r;
        {
          py::gil_scoped_release release;
          r = estimate_pose(in, config, weights);
        }
        std::vector<double> trace;
        for (const LossReport& l : r.loss_trace) trace.push_back(l.total);
        py::dict out;
        out["pose"] = r.pose();
        out["converged"] = r.converged;
        out["diverged"] = r.diverged;
        out["iterations"] = r.iterations_used;
        out["loss_trace"] = trace;
        out["final_loss"] = r.final_loss();
        return out;
      },
      py::arg("target"), py::arg("target_seg"), py::arg("target_depth"), py::arg("source"),
      py::arg("source_seg"), py::arg("intrinsics"), py::arg("weights") = LossWeights::paper(),
      py::arg("max_iters") = 60, py::arg("multi_start") = 5, py::arg("pyramid_levels") = 1);

  m.def("srl_percent", &srl_percent);
  m.def(
      "filter_pairs",
      [](const std::vector<std::tuple<std::string, std::string, double>>& pairs, double threshold) {
        std::vector<PairScore> scores;
        for (const auto& [source, target, srl] : pairs) scores.push_back({source, target, srl});
        const FilterResult r = filter_pairs(scores, threshold);
        auto unpack = [](const std::vector<PairScore>& v) {
          std::vector<std::tuple<std::string, std::string, double>> out;
          for (const PairScore& s : v) out.emplace_back(s.source_id, s.target_id, s.srl);
          return out;
        };
        return py::make_tuple(unpack(r.kept), unpack(r.removed), r.removed_fraction);
      },
      py::arg("pairs"), py::arg("threshold_percent") = 5.0,
      "pairs: (source_id, target_id, srl) tuples. Returns (kept, removed, removed_fraction).");

#ifdef OCUMAP_WITH_CLI
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv{"ocumap"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line; returns (exit_code, stdout, stderr).");
#endif
}

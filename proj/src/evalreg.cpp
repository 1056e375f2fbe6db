#include "ocumap/evalreg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string_view>
#include <utility>

#include "ocumap/errors.hpp"
#include "ocumap/io.hpp"
#include "ocumap/warp.hpp"

namespace ocumap {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.emplace_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

Label parse_region(const std::string& text, const std::string& where) {
  if (text == "sclera") return Label::sclera;
  if (text == "cornea") return Label::cornea;
  throw ParseError(where + ": region must be 'sclera' or 'cornea', got '" + text + "'");
}

double parse_coordinate(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw ParseError(where + ": '" + text + "' is not a finite number");
  }
  return v;
}

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void AnnotationSet::add(const std::string& frame_id, const AnnotatedPoint& point) {
  if (point.region == Label::eyelid) throw DomainError("annotation " + point.id + ": eyelid points are not tracked");
  if (!point.pixel.allFinite()) throw DomainError("annotation " + point.id + ": non-finite coordinate");
  auto& list = frames_[frame_id];
  for (const AnnotatedPoint& p : list) {
    if (p.id == point.id) {
      throw DomainError("annotation " + point.id + " appears twice in frame " + frame_id);
    }
  }
  list.push_back(point);
}

const std::vector<AnnotatedPoint>& AnnotationSet::points(const std::string& frame_id) const {
  static const std::vector<AnnotatedPoint> kEmpty;
  const auto it = frames_.find(frame_id);
  return it == frames_.end() ? kEmpty : it->second;
}

std::vector<std::string> AnnotationSet::frame_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, list] : frames_) ids.push_back(id);
  return ids;
}

std::size_t AnnotationSet::size() const {
  std::size_t n = 0;
  for (const auto& [id, list] : frames_) n += list.size();
  return n;
}

std::vector<std::pair<AnnotatedPoint, AnnotatedPoint>> AnnotationSet::matches(
    const std::string& target_id, const std::string& source_id) const {
  std::vector<std::pair<AnnotatedPoint, AnnotatedPoint>> out;
  const auto& source = points(source_id);
  for (const AnnotatedPoint& t : points(target_id)) {
    const auto it = std::find_if(source.begin(), source.end(),
                                 [&](const AnnotatedPoint& s) { return s.id == t.id; });
    if (it != source.end()) out.emplace_back(t, *it);
  }
  return out;
}

void AnnotationSet::validate_bounds(int width, int height) const {
  for (const auto& [frame, list] : frames_) {
    for (const AnnotatedPoint& p : list) {
      if (p.pixel.x() < 0.0 || p.pixel.y() < 0.0 || p.pixel.x() > width - 1 || p.pixel.y() > height - 1) {
        throw DomainError("annotation " + p.id + " in frame " + frame + " lies outside the image");
      }
    }
  }
}

AnnotationSet AnnotationSet::parse_csv(const std::string& text, const std::string& origin) {
  AnnotationSet set;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const std::vector<std::string> f = split_csv_line(body);
    const std::string where = origin + ":" + std::to_string(line_no);
    if (!header_seen) {
      header_seen = true;
      if (!f.empty() && f[0] == "frame_id") continue;
    }
    if (f.size() != 5) {
      throw ParseError(where + ": expected 5 fields (frame_id, point_id, u, v, region), got " +
                       std::to_string(f.size()));
    }
    if (f[0].empty() || f[1].empty()) throw ParseError(where + ": empty frame or point id");
    AnnotatedPoint p;
    p.id = f[1];
    p.pixel = Vec2(parse_coordinate(f[2], where + " field u"), parse_coordinate(f[3], where + " field v"));
    p.region = parse_region(f[4], where);
    try {
      set.add(f[0], p);
    } catch (const DomainError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return set;
}

AnnotationSet AnnotationSet::read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text(path), path.string());
}

std::string AnnotationSet::to_csv() const {
  std::string out = "frame_id,point_id,u,v,region\n";
  for (const auto& [frame, list] : frames_) {
    for (const AnnotatedPoint& p : list) {
      out += frame + "," + p.id + "," + format_number(p.pixel.x()) + "," + format_number(p.pixel.y()) +
             "," + label_name(p.region) + "\n";
    }
  }
  return out;
}

void AnnotationSet::write_csv(const std::filesystem::path& path) const { write_text(path, to_csv()); }

std::string EvalReport::to_csv() const {
  std::string out = "point_id,region,expected_u,expected_v,predicted_u,predicted_v,error_px\n";
  for (const PointError& p : points) {
    out += p.id + "," + label_name(p.region) + "," + format_number(p.expected.x()) + "," +
           format_number(p.expected.y()) + "," + format_number(p.predicted.x()) + "," +
           format_number(p.predicted.y()) + "," + format_number(p.error) + "\n";
  }
  return out;
}

std::string EvalReport::summary() const {
  std::ostringstream out;
  out.precision(6);
  out << "points tracked: " << points.size() << " (sclera " << sclera_count << ", cornea " << cornea_count
      << ")\n";
  out << "points lost: " << invalid_count << "\n";
  out << "mean error: " << mean_px << " px (" << mean_percent << " % of width " << width << ")\n";
  return out.str();
}

EvalReport make_report(std::span<const AnnotatedPoint> expected,
                       std::span<const std::optional<Vec2>> predicted, int width) {
  if (expected.size() != predicted.size()) throw DomainError("make_report: prediction count differs");
  if (width <= 0) throw DomainError("make_report: width must be positive");
  EvalReport report;
  report.width = width;
  double sum = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (!predicted[i]) {
      ++report.invalid_count;
      continue;
    }
    PointError e;
    e.id = expected[i].id;
    e.region = expected[i].region;
    e.expected = expected[i].pixel;
    e.predicted = *predicted[i];
    e.error = (e.predicted - e.expected).norm();
    sum += e.error;
    if (e.region == Label::cornea) {
      ++report.cornea_count;
    } else {
      ++report.sclera_count;
    }
    report.points.push_back(std::move(e));
  }
  if (!report.points.empty()) {
    report.mean_px = sum / static_cast<double>(report.points.size());
    report.mean_percent = 100.0 * report.mean_px / width;
  }
  return report;
}

EvalReport evaluate_tracking(const AnnotationSet& annotations, const std::string& target_id,
                             const std::string& source_id, const DepthMap& target_depth,
                             const Pose6DoF& pose, const Intrinsics& k) {
  const auto pairs = annotations.matches(target_id, source_id);
  if (pairs.empty()) {
    throw DomainError("evaluate_tracking: frames " + target_id + " and " + source_id +
                      " share no annotated ids");
  }
  std::vector<Vec2> query;
  std::vector<AnnotatedPoint> expected;
  for (const auto& [t, s] : pairs) {
    query.push_back(t.pixel);
    expected.push_back(s);
  }
  const std::vector<TrackedPoint> tracked = track_points(query, target_depth, pose, k);
  std::vector<std::optional<Vec2>> predicted;
  for (const TrackedPoint& p : tracked) {
    predicted.push_back(p.valid ? std::optional<Vec2>(p.pixel) : std::nullopt);
  }
  return make_report(expected, predicted, k.width);
}

double srl_percent(double srl) { return srl / 2.0 * 100.0; }

FilterResult filter_pairs(std::span<const PairScore> pairs, double threshold_percent) {
  FilterResult out;
  for (const PairScore& p : pairs) {
    if (srl_percent(p.srl) < threshold_percent) {
      out.kept.push_back(p);
    } else {
      out.removed.push_back(p);
    }
  }
  if (!pairs.empty()) {
    out.removed_fraction = static_cast<double>(out.removed.size()) / static_cast<double>(pairs.size());
  }
  return out;
}

std::size_t Mosaic::count(Coverage c) const {
  return static_cast<std::size_t>(std::count(coverage.begin(), coverage.end(), c));
}

Mosaic build_mosaic(const Frame& source, const Frame& target, const DepthMap& target_depth,
                    const Pose6DoF& pose, const Intrinsics& k, const PixelMask& target_valid,
                    const PixelMask* source_valid) {
  if (!target_depth.same_size(target) || !target_valid.matches(target)) {
    throw DomainError("build_mosaic: target, depth and mask sizes differ");
  }
  if (source_valid != nullptr && !source_valid->matches(source)) {
    throw DomainError("build_mosaic: source mask size differs from source");
  }
  const int sw = source.width();
  const int sh = source.height();
  Image stack(sw, sh, 4, 0.0);
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) {
      double* dst = stack.pixel(x, y);
      const double* src = source.pixel(x, y);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
      dst[3] = (source_valid == nullptr || (*source_valid)(x, y)) ? 1.0 : 0.0;
    }
  }
  const WarpResult warp = inverse_warp(stack, target_depth, pose, k);

  const int w = target.width();
  const int h = target.height();
  Mosaic m;
  m.image = Frame(w, h, 0.0);
  m.coverage.assign(static_cast<std::size_t>(w) * h, Coverage::none);
  m.warped_source = Image(w, h, 3, 0.0);
  m.source_valid = PixelMask(w, h, false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* ws = warp.warped.pixel(x, y);
      const bool from_source = warp.valid(x, y) && ws[3] >= 1.0 - 1e-12;
      if (from_source) {
        m.source_valid.set(x, y, true);
        std::copy(ws, ws + 3, m.warped_source.pixel(x, y));
      }
      Coverage& c = m.coverage[static_cast<std::size_t>(y) * w + x];
      if (target_valid(x, y)) {
        std::copy(target.pixel(x, y), target.pixel(x, y) + 3, m.image.pixel(x, y));
        c = Coverage::target;
      } else if (from_source) {
        std::copy(ws, ws + 3, m.image.pixel(x, y));
        c = Coverage::source;
      }
    }
  }
  return m;
}

double seam_difference(const Mosaic& mosaic, const Frame& target, int band) {
  if (band < 1) throw DomainError("seam_difference: band must be at least 1");
  const int w = mosaic.image.width();
  const int h = mosaic.image.height();
  if (!target.same_size(mosaic.image)) throw DomainError("seam_difference: target size differs");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mosaic.coverage_at(x, y) != Coverage::target || !mosaic.source_valid(x, y)) continue;
      bool near_seam = false;
      for (int dy = -band; dy <= band && !near_seam; ++dy) {
        for (int dx = -band; dx <= band; ++dx) {
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          if (mosaic.coverage_at(xx, yy) == Coverage::source) {
            near_seam = true;
            break;
          }
        }
      }
      if (!near_seam) continue;
      const double* a = target.pixel(x, y);
      const double* b = mosaic.warped_source.pixel(x, y);
      sum += (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2])) / 3.0;
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

void write_coverage(const std::filesystem::path& path, const Mosaic& mosaic) {
  std::vector<std::uint8_t> levels(mosaic.coverage.size());
  std::transform(mosaic.coverage.begin(), mosaic.coverage.end(), levels.begin(),
                 [](Coverage c) { return static_cast<std::uint8_t>(c); });
  write_gray(path, mosaic.image.width(), mosaic.image.height(), levels);
}

}  // namespace ocumap

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocumap/camera.hpp"
#include "ocumap/imaging.hpp"

namespace ocumap {

struct AnnotatedPoint {
  std::string id;
  Vec2 pixel = Vec2::Zero();
  Label region = Label::sclera;  // sclera or cornea
};

// Named points per frame. CSV columns: frame_id, point_id, u, v, region.
class AnnotationSet {
 public:
  // Throws DomainError on a duplicate id within the frame, an eyelid region or
  // a non-finite coordinate.
  void add(const std::string& frame_id, const AnnotatedPoint& point);

  bool contains(const std::string& frame_id) const { return frames_.count(frame_id) != 0; }
  // Empty for unknown frames.
  const std::vector<AnnotatedPoint>& points(const std::string& frame_id) const;
  std::vector<std::string> frame_ids() const;
  std::size_t size() const;

  // Points of `target_id` whose id also appears in `source_id`, paired as
  // (target, source), in target order.
  std::vector<std::pair<AnnotatedPoint, AnnotatedPoint>> matches(const std::string& target_id,
                                                                 const std::string& source_id) const;

  // Throws DomainError when a point lies outside [0, width-1] x [0, height-1].
  void validate_bounds(int width, int height) const;

  static AnnotationSet parse_csv(const std::string& text, const std::string& origin = "<csv>");
  static AnnotationSet read_csv(const std::filesystem::path& path);
  // Frames in id order, points in insertion order; coordinates with 17
  // significant digits.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::vector<AnnotatedPoint>> frames_;
};

struct PointError {
  std::string id;
  Label region = Label::sclera;
  Vec2 expected = Vec2::Zero();
  Vec2 predicted = Vec2::Zero();
  double error = 0.0;  // Euclidean, pixels
};

struct EvalReport {
  std::vector<PointError> points;
  double mean_px = 0.0;
  double mean_percent = 0.0;  // 100 * mean_px / width
  int width = 0;
  std::size_t sclera_count = 0;
  std::size_t cornea_count = 0;
  std::size_t invalid_count = 0;  // matched points the warp could not track

  // Columns: point_id, region, expected_u, expected_v, predicted_u, predicted_v, error_px.
  std::string to_csv() const;
  std::string summary() const;
};

// Builds a report from expected points and predictions; std::nullopt marks a
// point that could not be tracked. Throws DomainError on a size mismatch or
// non-positive width.
EvalReport make_report(std::span<const AnnotatedPoint> expected,
                       std::span<const std::optional<Vec2>> predicted, int width);

// Tracks the target-frame annotations into the source frame with the target
// depth and pose, and compares them with the source annotations of the same id.
EvalReport evaluate_tracking(const AnnotationSet& annotations, const std::string& target_id,
                             const std::string& source_id, const DepthMap& target_depth,
                             const Pose6DoF& pose, const Intrinsics& k);

// Reference numbers from the clinical study this library follows (point
// tracking on annotated slit-lamp video). They cannot be recomputed without
// that dataset and are kept for comparison only.
struct TrackingReference {
  const char* method;
  double mean_px;
  double mean_percent;
};
inline constexpr TrackingReference kClinicalTrackingReference[] = {
    {"photometric baseline, consecutive frames", 29.08, 1.82},
    {"photometric baseline, frame step", 27.19, 1.70},
    {"frame step + semantic reconstruction", 22.48, 1.40},
    {"frame step + semantic reconstruction + sphere fitting", 7.7, 0.48},
    {"inter-grader", 4.81, 0.30},
};

// SRL as a percentage of its largest possible value (2 for one-hot labels).
double srl_percent(double srl);

struct PairScore {
  std::string source_id;
  std::string target_id;
  double srl = 0.0;
};

struct FilterResult {
  std::vector<PairScore> kept;
  std::vector<PairScore> removed;
  double removed_fraction = 0.0;
};

// Keeps pairs whose srl_percent is strictly below `threshold_percent`; order
// is preserved. NaN scores are removed.
FilterResult filter_pairs(std::span<const PairScore> pairs, double threshold_percent);

enum class Coverage : std::uint8_t { none = 0, target = 1, source = 2 };

struct Mosaic {
  Frame image;
  std::vector<Coverage> coverage;  // row-major, target geometry
  Image warped_source;
  PixelMask source_valid;  // where the warped source is defined

  Coverage coverage_at(int x, int y) const {
    return coverage[static_cast<std::size_t>(y) * image.width() + x];
  }
  std::size_t count(Coverage c) const;
};

// Composites the source warped into the target geometry: target pixels where
// `target_valid` holds, warped source pixels where only the source covers.
// An optional `source_valid` mask (source geometry) limits which source pixels
// may contribute; a warped sample counts only if all its bilinear neighbours
// are valid there.
Mosaic build_mosaic(const Frame& source, const Frame& target, const DepthMap& target_depth,
                    const Pose6DoF& pose, const Intrinsics& k, const PixelMask& target_valid,
                    const PixelMask* source_valid = nullptr);

// Mean absolute target vs warped-source difference over target-covered pixels
// within `band` pixels (Chebyshev) of a source-covered pixel. Returns 0 when
// there is no seam.
double seam_difference(const Mosaic& mosaic, const Frame& target, int band = 2);

// Writes the coverage as a PGM with values 0, 1, 2.
void write_coverage(const std::filesystem::path& path, const Mosaic& mosaic);

}  // namespace ocumap

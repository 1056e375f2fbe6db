#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocumap/camera.hpp"
#include "ocumap/config.hpp"
#include "ocumap/imaging.hpp"
#include "ocumap/spherefit.hpp"

namespace ocumap {

struct LossWeights {
  double alpha_srl = 0.85;
  double alpha_recon = 0.15;
  double alpha_ssim = 0.15;
  double alpha_ds = 0.04;
  double alpha_sfl = 10000.0;
  // Minimum region presence (fraction of all frame pixels) for a sphere-fit term.
  double sfl_threshold = 0.5;

  // Throws DomainError if any weight is negative or all weights are zero.
  void validate() const;
  LossWeights scaled(double factor) const;

  // Training weights reported for the full method: SRL 0.85, L1 0.15,
  // SSIM 0.15, smoothness 0.04, sphere fitting 10000, presence threshold 0.5.
  static LossWeights paper();
  // Same weights with a presence threshold of 0.1 so that the corneal cap of
  // the synthetic renderer (about a quarter of the frame) is fitted too.
  // Not a published profile.
  static LossWeights synthetic();
  // Photometric baseline: L1 0.85, SSIM 0.15, smoothness 0.04.
  static LossWeights photometric_baseline();
};

// "paper", "synthetic" or "baseline"; throws DomainError otherwise.
LossWeights weights_profile(std::string_view name);

// Overrides fields of `base` from keys alpha_srl, alpha_recon, alpha_ssim,
// alpha_ds, alpha_sfl and sfl_threshold.
LossWeights weights_from_config(const KeyValueConfig& config, LossWeights base);

// A masked mean. `count` is the number of contributing pixels (or windows);
// zero means the mask was empty and `value` is defined as 0.
struct MaskedLoss {
  double value = 0.0;
  std::size_t count = 0;
  bool empty() const { return count == 0; }
};

// Mean over valid pixels of the squared L2 distance between the warped soft
// one-hot encoding and the target one-hot encoding.
MaskedLoss loss_srl(const Image& warped_onehot, const SegMap& target, const PixelMask& valid);

// Mean over valid pixels of the channel-averaged absolute difference.
MaskedLoss loss_recon(const Image& warped, const Frame& target, const PixelMask& valid);

inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr int kSsimWindow = 3;

// 1 - mean SSIM over all fully valid 3x3 windows and all channels, with
// population statistics and l1 = (k1 L)^2, l2 = (k2 L)^2, L = 1.
MaskedLoss loss_ssim(const Image& warped, const Frame& target, const PixelMask& valid);

// Edge-aware smoothness: mean over valid pixels of
//   |dx D| exp(-|dx I|) + |dy D| exp(-|dy I|)
// using forward differences and the channel-averaged image gradient magnitude.
// A direction contributes only when the forward neighbour is valid too.
MaskedLoss loss_ds(const DepthMap& depth, const Frame& image, const PixelMask& valid);

struct SflRegion {
  double loss = 0.0;
  bool skipped = true;
  double presence = 0.0;
  std::size_t point_count = 0;
  SphereParams sphere;
};

struct SflResult {
  SflRegion cornea;
  SflRegion sclera;
  double total() const { return cornea.loss + sclera.loss; }
};

// Sphere-fitting loss for the corneal and scleral regions. A region is fitted
// only when its presence exceeds `threshold` and it has at least 4 pixels;
// otherwise (or on degenerate geometry) it is skipped and contributes 0.
SflResult loss_sfl(const DepthMap& depth, const SegMap& seg, const Intrinsics& k,
                   double threshold);

struct LossReport {
  double srl = 0.0;
  double recon = 0.0;
  double ssim = 0.0;
  double ds = 0.0;
  double sfl_cornea = 0.0;
  double sfl_sclera = 0.0;
  double total = 0.0;
  std::size_t valid_pixel_count = 0;
  bool sfl_cornea_skipped = true;
  bool sfl_sclera_skipped = true;

  double sfl() const { return sfl_cornea + sfl_sclera; }
  bool finite() const;
};

double weighted_total(const LossReport& report, const LossWeights& weights);

struct SourceView {
  Frame frame;
  SegMap seg;
};

// Inputs for one registration problem: a target view with its depth and one
// or more source views. Poses passed alongside map target-camera coordinates
// into each source camera.
struct PairInputs {
  Frame target;
  SegMap target_seg;
  DepthMap target_depth;
  std::vector<SourceView> sources;
  Intrinsics k;

  // Throws DomainError on size mismatches or missing sources.
  void validate() const;

  // Half-resolution copy: frames and depth are 2x2 box averages, labels take
  // the majority of each block (ties go to the lower label value) and the
  // intrinsics are rescaled to match. Odd trailing rows/columns are dropped.
  PairInputs downsampled() const;
};

// Reusable evaluator for one PairInputs. Depth-only terms (smoothness and
// sphere fitting) are cached until the depth changes. Not thread-safe for
// concurrent set_depth(); evaluate() is const and re-entrant.
class PairObjective {
 public:
  PairObjective(PairInputs inputs, LossWeights weights);

  const PairInputs& inputs() const { return inputs_; }
  const LossWeights& weights() const { return weights_; }
  std::size_t source_count() const { return inputs_.sources.size(); }

  void set_depth(DepthMap depth);
  void set_weights(const LossWeights& weights);

  // One pose per source. With several sources SRL and L1 take the per-pixel
  // minimum over the sources valid at that pixel; SSIM is averaged.
  LossReport evaluate(std::span<const Pose6DoF> poses) const;
  LossReport evaluate(const Pose6DoF& pose) const { return evaluate(std::span(&pose, 1)); }

 private:
  void refresh_depth_terms();

  PairInputs inputs_;
  LossWeights weights_;
  PixelMask target_mask_;
  Image target_onehot_;
  std::vector<Image> source_stacks_;
  MaskedLoss ds_;
  SflResult sfl_;
};

LossReport total_loss(const PairInputs& inputs, std::span<const Pose6DoF> poses,
                      const LossWeights& weights);
LossReport total_loss(const PairInputs& inputs, const Pose6DoF& pose, const LossWeights& weights);

}  // namespace ocumap

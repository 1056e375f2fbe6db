#include "ocumap/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "ocumap/errors.hpp"
#include "ocumap/warp.hpp"

namespace ocumap {
namespace {

// Channel range [offset, offset + count) of an interleaved image.
struct ChannelView {
  const Image* image;
  int offset;
  int count;

  const double* at(int x, int y) const { return image->pixel(x, y) + offset; }
};

ChannelView all_channels(const Image& image) { return {&image, 0, image.channels()}; }

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (!a.same_size(b)) throw DomainError(std::string(what) + ": raster sizes differ");
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Per-pixel squared one-hot distance, NaN where invalid.
void srl_errors(const ChannelView& warped, const ChannelView& target, const PixelMask& valid,
                std::vector<double>& out) {
  const int w = valid.width();
  const int h = valid.height();
  out.assign(valid.pixel_count(), kNaN);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!valid(x, y)) continue;
      const double* a = warped.at(x, y);
      const double* b = target.at(x, y);
      double e = 0.0;
      for (int c = 0; c < warped.count; ++c) {
        const double d = a[c] - b[c];
        e += d * d;
      }
      out[static_cast<std::size_t>(y) * w + x] = e;
    }
  }
}

// Per-pixel channel-averaged absolute difference, NaN where invalid.
void recon_errors(const ChannelView& warped, const ChannelView& target, const PixelMask& valid,
                  std::vector<double>& out) {
  const int w = valid.width();
  const int h = valid.height();
  const double inv_channels = 1.0 / warped.count;
  out.assign(valid.pixel_count(), kNaN);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!valid(x, y)) continue;
      const double* a = warped.at(x, y);
      const double* b = target.at(x, y);
      double e = 0.0;
      for (int c = 0; c < warped.count; ++c) e += std::abs(a[c] - b[c]);
      out[static_cast<std::size_t>(y) * w + x] = e * inv_channels;
    }
  }
}

MaskedLoss masked_mean(const std::vector<double>& errors) {
  MaskedLoss out;
  double sum = 0.0;
  for (double e : errors) {
    if (std::isnan(e)) continue;
    sum += e;
    ++out.count;
  }
  if (out.count > 0) out.value = sum / static_cast<double>(out.count);
  return out;
}

struct SsimSums {
  double sum = 0.0;            // of SSIM over windows x channels
  std::size_t windows = 0;     // fully valid windows
  int channels = 0;
};

// Separable 3x3 box sums of the five first/second-order statistics.
SsimSums ssim_accumulate(const ChannelView& a, const ChannelView& b, const PixelMask& valid) {
  const int w = valid.width();
  const int h = valid.height();
  SsimSums out;
  out.channels = a.count;
  if (w < kSsimWindow || h < kSsimWindow) return out;

  const double l1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double l2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  const double inv_n = 1.0 / (kSsimWindow * kSsimWindow);
  const std::size_t n = static_cast<std::size_t>(w) * h;

  // Horizontal pass: valid-pixel counts, then per-channel stats.
  std::vector<int> mask_h(n, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      mask_h[static_cast<std::size_t>(y) * w + x] = valid(x - 1, y) + valid(x, y) + valid(x + 1, y);
    }
  }
  std::vector<std::uint8_t> window_ok(n, 0);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (mask_h[i - w] + mask_h[i] + mask_h[i + w] == kSsimWindow * kSsimWindow) {
        window_ok[i] = 1;
        ++out.windows;
      }
    }
  }
  if (out.windows == 0) return out;

  std::vector<double> hs(n * 5, 0.0);
  for (int c = 0; c < a.count; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 1; x + 1 < w; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int dx = -1; dx <= 1; ++dx) {
          const double va = a.at(x + dx, y)[c];
          const double vb = b.at(x + dx, y)[c];
          s[0] += va;
          s[1] += vb;
          s[2] += va * va;
          s[3] += vb * vb;
          s[4] += va * vb;
        }
        double* dst = &hs[(static_cast<std::size_t>(y) * w + x) * 5];
        for (int k = 0; k < 5; ++k) dst[k] = s[k];
      }
    }
    for (int y = 1; y + 1 < h; ++y) {
      for (int x = 1; x + 1 < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!window_ok[i]) continue;
        const double* r0 = &hs[(i - w) * 5];
        const double* r1 = &hs[i * 5];
        const double* r2 = &hs[(i + w) * 5];
        const double mu_a = (r0[0] + r1[0] + r2[0]) * inv_n;
        const double mu_b = (r0[1] + r1[1] + r2[1]) * inv_n;
        const double var_a = (r0[2] + r1[2] + r2[2]) * inv_n - mu_a * mu_a;
        const double var_b = (r0[3] + r1[3] + r2[3]) * inv_n - mu_b * mu_b;
        const double cov = (r0[4] + r1[4] + r2[4]) * inv_n - mu_a * mu_b;
        const double num = (2.0 * mu_a * mu_b + l1) * (2.0 * cov + l2);
        const double den = (mu_a * mu_a + mu_b * mu_b + l1) * (var_a + var_b + l2);
        out.sum += num / den;
      }
    }
  }
  return out;
}

MaskedLoss ssim_loss_from(const SsimSums& s) {
  MaskedLoss out;
  out.count = s.windows;
  if (s.windows > 0) {
    out.value = 1.0 - s.sum / (static_cast<double>(s.windows) * s.channels);
  }
  return out;
}

}  // namespace

void LossWeights::validate() const {
  const double all[] = {alpha_srl, alpha_recon, alpha_ssim, alpha_ds, alpha_sfl};
  bool any = false;
  for (double a : all) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("loss weights must be finite and >= 0");
    any = any || a > 0.0;
  }
  if (!any) throw DomainError("at least one loss weight must be positive");
  if (!(sfl_threshold >= 0.0 && sfl_threshold <= 1.0)) {
    throw DomainError("sfl_threshold must lie in [0, 1]");
  }
}

LossWeights LossWeights::scaled(double factor) const {
  LossWeights out = *this;
  out.alpha_srl *= factor;
  out.alpha_recon *= factor;
  out.alpha_ssim *= factor;
  out.alpha_ds *= factor;
  out.alpha_sfl *= factor;
  return out;
}

LossWeights LossWeights::paper() { return LossWeights{}; }

LossWeights LossWeights::synthetic() {
  LossWeights w = paper();
  w.sfl_threshold = 0.1;
  return w;
}

LossWeights LossWeights::photometric_baseline() {
  LossWeights w;
  w.alpha_srl = 0.0;
  w.alpha_recon = 0.85;
  w.alpha_ssim = 0.15;
  w.alpha_ds = 0.04;
  w.alpha_sfl = 0.0;
  return w;
}

LossWeights weights_profile(std::string_view name) {
  if (name == "paper") return LossWeights::paper();
  if (name == "synthetic") return LossWeights::synthetic();
  if (name == "baseline") return LossWeights::photometric_baseline();
  throw DomainError("unknown weights profile '" + std::string(name) + "'");
}

LossWeights weights_from_config(const KeyValueConfig& config, LossWeights base) {
  base.alpha_srl = config.get_double_or("alpha_srl", base.alpha_srl);
  base.alpha_recon = config.get_double_or("alpha_recon", base.alpha_recon);
  base.alpha_ssim = config.get_double_or("alpha_ssim", base.alpha_ssim);
  base.alpha_ds = config.get_double_or("alpha_ds", base.alpha_ds);
  base.alpha_sfl = config.get_double_or("alpha_sfl", base.alpha_sfl);
  base.sfl_threshold = config.get_double_or("sfl_threshold", base.sfl_threshold);
  return base;
}

MaskedLoss loss_srl(const Image& warped_onehot, const SegMap& target, const PixelMask& valid) {
  if (warped_onehot.channels() != kNumLabels) throw DomainError("loss_srl: expected 3-channel soft labels");
  if (warped_onehot.width() != target.width() || warped_onehot.height() != target.height() ||
      !valid.matches(warped_onehot)) {
    throw DomainError("loss_srl: raster sizes differ");
  }
  const Image target_onehot = target.onehot();
  std::vector<double> errors;
  srl_errors(all_channels(warped_onehot), all_channels(target_onehot), valid, errors);
  return masked_mean(errors);
}

MaskedLoss loss_recon(const Image& warped, const Frame& target, const PixelMask& valid) {
  require_same_size(warped, target, "loss_recon");
  if (warped.channels() != target.channels()) throw DomainError("loss_recon: channel counts differ");
  if (!valid.matches(target)) throw DomainError("loss_recon: mask size differs");
  std::vector<double> errors;
  recon_errors(all_channels(warped), all_channels(target), valid, errors);
  return masked_mean(errors);
}

MaskedLoss loss_ssim(const Image& warped, const Frame& target, const PixelMask& valid) {
  require_same_size(warped, target, "loss_ssim");
  if (warped.channels() != target.channels()) throw DomainError("loss_ssim: channel counts differ");
  if (!valid.matches(target)) throw DomainError("loss_ssim: mask size differs");
  if (target.width() < kSsimWindow || target.height() < kSsimWindow) {
    throw DomainError("loss_ssim: raster smaller than the 3x3 window");
  }
  return ssim_loss_from(ssim_accumulate(all_channels(warped), all_channels(target), valid));
}

MaskedLoss loss_ds(const DepthMap& depth, const Frame& image, const PixelMask& valid) {
  require_same_size(depth, image, "loss_ds");
  if (!valid.matches(depth)) throw DomainError("loss_ds: mask size differs");
  const int w = depth.width();
  const int h = depth.height();
  const int channels = image.channels();
  const double inv_channels = 1.0 / channels;
  MaskedLoss out;
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!valid(x, y)) continue;
      ++out.count;
      const double* p = image.pixel(x, y);
      double term = 0.0;
      if (x + 1 < w && valid(x + 1, y)) {
        const double* q = image.pixel(x + 1, y);
        double gi = 0.0;
        for (int c = 0; c < channels; ++c) gi += std::abs(q[c] - p[c]);
        term += std::abs(depth(x + 1, y) - depth(x, y)) * std::exp(-gi * inv_channels);
      }
      if (y + 1 < h && valid(x, y + 1)) {
        const double* q = image.pixel(x, y + 1);
        double gi = 0.0;
        for (int c = 0; c < channels; ++c) gi += std::abs(q[c] - p[c]);
        term += std::abs(depth(x, y + 1) - depth(x, y)) * std::exp(-gi * inv_channels);
      }
      sum += term;
    }
  }
  if (out.count > 0) out.value = sum / static_cast<double>(out.count);
  return out;
}

SflResult loss_sfl(const DepthMap& depth, const SegMap& seg, const Intrinsics& k,
                   double threshold) {
  if (seg.width() != depth.width() || seg.height() != depth.height()) {
    throw DomainError("loss_sfl: segmap size differs from depth");
  }
  auto fit_region = [&](Label label) {
    SflRegion region;
    region.presence = region_presence(seg, label);
    if (!(region.presence > threshold)) return region;
    const PointCloud cloud = region_cloud(depth, seg, k, label);
    region.point_count = cloud.size();
    if (cloud.size() < 4) return region;
    try {
      region.sphere = fit_sphere(cloud);
    } catch (const DegenerateGeometryError&) {
      return region;
    }
    region.loss = sphere_mse(cloud.points, region.sphere);
    region.skipped = false;
    return region;
  };
  SflResult out;
  out.cornea = fit_region(Label::cornea);
  out.sclera = fit_region(Label::sclera);
  return out;
}

bool LossReport::finite() const {
  return std::isfinite(srl) && std::isfinite(recon) && std::isfinite(ssim) && std::isfinite(ds) &&
         std::isfinite(sfl_cornea) && std::isfinite(sfl_sclera) && std::isfinite(total);
}

double weighted_total(const LossReport& r, const LossWeights& w) {
  return w.alpha_srl * r.srl + w.alpha_recon * r.recon + w.alpha_ssim * r.ssim + w.alpha_ds * r.ds +
         w.alpha_sfl * (r.sfl_cornea + r.sfl_sclera);
}

namespace {

Image box_downsample(const Image& in) {
  const int w = in.width() / 2;
  const int h = in.height() / 2;
  Image out(w, h, in.channels(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* dst = out.pixel(x, y);
      for (int c = 0; c < in.channels(); ++c) {
        dst[c] = 0.25 * (in.at(2 * x, 2 * y, c) + in.at(2 * x + 1, 2 * y, c) +
                         in.at(2 * x, 2 * y + 1, c) + in.at(2 * x + 1, 2 * y + 1, c));
      }
    }
  }
  return out;
}

SegMap majority_downsample(const SegMap& in) {
  const int w = in.width() / 2;
  const int h = in.height() / 2;
  SegMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::array<int, kNumLabels> votes{};
      ++votes[static_cast<int>(in(2 * x, 2 * y))];
      ++votes[static_cast<int>(in(2 * x + 1, 2 * y))];
      ++votes[static_cast<int>(in(2 * x, 2 * y + 1))];
      ++votes[static_cast<int>(in(2 * x + 1, 2 * y + 1))];
      const auto best = std::max_element(votes.begin(), votes.end());
      out.set(x, y, static_cast<Label>(best - votes.begin()));
    }
  }
  return out;
}

}  // namespace

PairInputs PairInputs::downsampled() const {
  validate();
  if (target.width() < 4 || target.height() < 4) throw DomainError("downsampled: raster too small");
  PairInputs out;
  out.target = Frame(box_downsample(target));
  out.target_seg = majority_downsample(target_seg);
  out.target_depth = DepthMap(box_downsample(target_depth));
  for (const SourceView& s : sources) {
    out.sources.push_back({Frame(box_downsample(s.frame)), majority_downsample(s.seg)});
  }
  out.k = k.scaled(0.5);
  out.k.width = out.target.width();
  out.k.height = out.target.height();
  return out;
}

void PairInputs::validate() const {
  k.validate();
  if (sources.empty()) throw DomainError("pair inputs need at least one source view");
  if (target.width() != k.width || target.height() != k.height) {
    throw DomainError("target frame size differs from the intrinsics image size");
  }
  if (target_seg.width() != target.width() || target_seg.height() != target.height() ||
      !target_depth.same_size(target)) {
    throw DomainError("target frame, segmap and depth sizes differ");
  }
  for (const SourceView& s : sources) {
    if (!s.frame.same_size(target) || s.seg.width() != target.width() ||
        s.seg.height() != target.height()) {
      throw DomainError("source view size differs from the target");
    }
  }
}

PairObjective::PairObjective(PairInputs inputs, LossWeights weights)
    : inputs_(std::move(inputs)), weights_(weights) {
  inputs_.validate();
  weights_.validate();
  target_mask_ = eyelid_mask(inputs_.target_seg);
  target_onehot_ = inputs_.target_seg.onehot();
  const int w = inputs_.target.width();
  const int h = inputs_.target.height();
  source_stacks_.reserve(inputs_.sources.size());
  for (const SourceView& s : inputs_.sources) {
    // Frame channels 0..2 followed by the soft labels in channels 3..5, so a
    // single warp resamples both.
    Image stack(w, h, 3 + kNumLabels, 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double* dst = stack.pixel(x, y);
        const double* src = s.frame.pixel(x, y);
        dst[0] = src[0];
        dst[1] = src[1];
        dst[2] = src[2];
        dst[3 + static_cast<int>(s.seg(x, y))] = 1.0;
      }
    }
    source_stacks_.push_back(std::move(stack));
  }
  refresh_depth_terms();
}

void PairObjective::set_depth(DepthMap depth) {
  if (!depth.same_size(inputs_.target)) throw DomainError("set_depth: size differs from target");
  inputs_.target_depth = std::move(depth);
  refresh_depth_terms();
}

void PairObjective::set_weights(const LossWeights& weights) {
  weights.validate();
  const bool threshold_changed = weights.sfl_threshold != weights_.sfl_threshold;
  weights_ = weights;
  if (threshold_changed) refresh_depth_terms();
}

void PairObjective::refresh_depth_terms() {
  ds_ = loss_ds(inputs_.target_depth, inputs_.target, target_mask_);
  sfl_ = loss_sfl(inputs_.target_depth, inputs_.target_seg, inputs_.k, weights_.sfl_threshold);
}

LossReport PairObjective::evaluate(std::span<const Pose6DoF> poses) const {
  if (poses.size() != source_stacks_.size()) {
    throw DomainError("evaluate: expected one pose per source view");
  }
  const int w = inputs_.target.width();
  const int h = inputs_.target.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const ChannelView target_rgb = all_channels(inputs_.target);
  const ChannelView target_labels = all_channels(target_onehot_);

  LossReport report;
  std::vector<double> srl_min(n, kNaN);
  std::vector<double> recon_min(n, kNaN);
  std::vector<double> errors;
  double ssim_sum = 0.0;
  int ssim_sources = 0;

  for (std::size_t s = 0; s < source_stacks_.size(); ++s) {
    const WarpResult warp =
        inverse_warp(source_stacks_[s], inputs_.target_depth, poses[s], inputs_.k, target_mask_);
    const ChannelView rgb{&warp.warped, 0, 3};
    const ChannelView labels{&warp.warped, 3, kNumLabels};

    srl_errors(labels, target_labels, warp.valid, errors);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isnan(errors[i]) && !(errors[i] >= srl_min[i])) srl_min[i] = errors[i];
    }
    recon_errors(rgb, target_rgb, warp.valid, errors);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isnan(errors[i]) && !(errors[i] >= recon_min[i])) recon_min[i] = errors[i];
    }
    const MaskedLoss ssim = ssim_loss_from(ssim_accumulate(rgb, target_rgb, warp.valid));
    if (!ssim.empty()) {
      ssim_sum += ssim.value;
      ++ssim_sources;
    }
  }

  const MaskedLoss srl = masked_mean(srl_min);
  const MaskedLoss recon = masked_mean(recon_min);
  report.srl = srl.value;
  report.recon = recon.value;
  report.valid_pixel_count = srl.count;
  report.ssim = ssim_sources > 0 ? ssim_sum / ssim_sources : 0.0;
  report.ds = ds_.value;
  report.sfl_cornea = sfl_.cornea.loss;
  report.sfl_sclera = sfl_.sclera.loss;
  report.sfl_cornea_skipped = sfl_.cornea.skipped;
  report.sfl_sclera_skipped = sfl_.sclera.skipped;
  report.total = weighted_total(report, weights_);
  return report;
}

LossReport total_loss(const PairInputs& inputs, std::span<const Pose6DoF> poses,
                      const LossWeights& weights) {
  return PairObjective(inputs, weights).evaluate(poses);
}

LossReport total_loss(const PairInputs& inputs, const Pose6DoF& pose, const LossWeights& weights) {
  return total_loss(inputs, std::span(&pose, 1), weights);
}

}  // namespace ocumap

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "naive_losses.hpp"
#include "ocumap/errors.hpp"
#include "ocumap/losses.hpp"
#include "ocumap/spherefit.hpp"

using namespace ocumap;
using namespace ocumap::testing;

namespace {

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

Image soft_labels(std::mt19937_64& rng, int w, int h) {
  Image im = random_image(rng, w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double* p = im.pixel(x, y);
      const double s = p[0] + p[1] + p[2];
      for (int c = 0; c < 3; ++c) p[c] /= s;
    }
  return im;
}

PairInputs random_pair(std::mt19937_64& rng, int w, int h, int sources) {
  PairInputs in;
  in.target = random_frame(rng, w, h);
  in.target_seg = random_seg(rng, w, h);
  in.target_depth = random_depth(rng, w, h, 40.0, 60.0);
  for (int s = 0; s < sources; ++s) in.sources.push_back({random_frame(rng, w, h), random_seg(rng, w, h)});
  in.k = simple_intrinsics(w, h, 1.5 * w);
  return in;
}

}  // namespace

TEST_CASE("single losses match per-pixel loops on random inputs") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(3, 64);
  for (int t = 0; t < 100; ++t) {
    const int w = size(rng), h = size(rng);
    const Image soft = soft_labels(rng, w, h);
    const SegMap seg = random_seg(rng, w, h);
    const Frame a = random_frame(rng, w, h), b = random_frame(rng, w, h);
    const PixelMask valid = random_mask(rng, w, h, 0.9);
    const DepthMap depth = random_depth(rng, w, h);
    const Intrinsics k = simple_intrinsics(w, h, 50.0);

    CHECK(close(loss_srl(soft, seg, valid).value, naive::srl(soft, seg, valid)));
    CHECK(close(loss_recon(a, b, valid).value, naive::recon(a, b, valid)));
    const auto [ssim, windows] = naive::ssim(a, b, valid);
    const MaskedLoss s = loss_ssim(a, b, valid);
    CHECK(s.count == static_cast<std::size_t>(windows));
    CHECK(close(s.value, ssim));
    CHECK(close(loss_ds(depth, a, valid).value, naive::ds(depth, a, valid)));

    const SflResult sfl = loss_sfl(depth, seg, k, 0.2);
    for (const Label l : {Label::cornea, Label::sclera}) {
      const SflRegion& r = l == Label::cornea ? sfl.cornea : sfl.sclera;
      const double expected = naive::sfl_region(depth, seg, k, l, 0.2);
      CHECK(r.skipped == std::isnan(expected));
      if (!r.skipped) CHECK(close(r.loss, expected));
    }
  }
}

TEST_CASE("pair objective matches a loop implementation with several sources") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> size(4, 40), nsrc(1, 3);
  for (int t = 0; t < 30; ++t) {
    const PairInputs in = random_pair(rng, size(rng), size(rng), nsrc(rng));
    std::vector<Pose6DoF> poses;
    for (std::size_t s = 0; s < in.sources.size(); ++s) poses.push_back(random_pose(rng, 1.0, 0.02));
    const LossWeights weights = LossWeights::synthetic();
    const LossReport r = total_loss(in, poses, weights);

    const int w = in.target.width(), h = in.target.height();
    const PixelMask allowed = eyelid_mask(in.target_seg);
    std::vector<naive::Warped> rgb, lab;
    for (std::size_t s = 0; s < in.sources.size(); ++s) {
      rgb.push_back(naive::warp(in.sources[s].frame, in.target_depth, poses[s], in.k, allowed));
      lab.push_back(naive::warp(in.sources[s].seg.onehot(), in.target_depth, poses[s], in.k, allowed));
    }
    double srl = 0, recon = 0, ssim = 0;
    int n = 0, ssim_n = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double best_s = INFINITY, best_r = INFINITY;
        for (std::size_t s = 0; s < rgb.size(); ++s) {
          if (!rgb[s].valid(x, y)) continue;
          best_s = std::min(best_s, naive::srl_at(lab[s].image, in.target_seg, x, y));
          best_r = std::min(best_r, naive::recon_at(rgb[s].image, in.target, x, y));
        }
        if (std::isinf(best_s)) continue;
        srl += best_s;
        recon += best_r;
        ++n;
      }
    for (const auto& wr : rgb) {
      const auto [v, windows] = naive::ssim(wr.image, in.target, wr.valid);
      if (windows > 0) {
        ssim += v;
        ++ssim_n;
      }
    }
    CHECK(r.valid_pixel_count == static_cast<std::size_t>(n));
    CHECK(close(r.srl, n ? srl / n : 0.0));
    CHECK(close(r.recon, n ? recon / n : 0.0));
    CHECK(close(r.ssim, ssim_n ? ssim / ssim_n : 0.0));
    CHECK(close(r.ds, naive::ds(in.target_depth, in.target, allowed)));
    CHECK(close(r.total, weighted_total(r, weights)));
  }
}

TEST_CASE("SRL extremes") {
  SegMap seg(4, 4, Label::sclera);
  const PixelMask all(4, 4, true);
  CHECK(loss_srl(seg.onehot(), seg, all).value == 0.0);
  const SegMap other(4, 4, Label::cornea);
  CHECK(loss_srl(other.onehot(), seg, all).value == 2.0);
  const MaskedLoss none = loss_srl(seg.onehot(), seg, PixelMask(4, 4, false));
  CHECK(none.empty());
  CHECK(none.value == 0.0);
  CHECK_THROWS_AS(loss_srl(Image(4, 4, 2), seg, all), DomainError);
}

TEST_CASE("recon and SSIM of identical frames") {
  std::mt19937_64 rng(13);
  const Frame f = random_frame(rng, 9, 7);
  const PixelMask all(9, 7, true);
  CHECK(loss_recon(f, f, all).value == 0.0);
  CHECK(std::abs(loss_ssim(f, f, all).value) < 1e-12);
  CHECK(loss_ssim(f, f, all).count == 7u * 5u);
  Frame g = f;
  for (double& v : g.data()) v = 1.0 - v;
  CHECK(loss_recon(f, g, all).value > 0.0);
  CHECK_THROWS_AS(loss_ssim(Frame(2, 5), Frame(2, 5), PixelMask(2, 5)), DomainError);
}

TEST_CASE("smoothness: constant depth is free, edges damp the penalty") {
  const Frame flat(6, 6, 0.5);
  const PixelMask all(6, 6, true);
  CHECK(loss_ds(DepthMap(6, 6, 40.0), flat, all).value == 0.0);

  DepthMap step(6, 6, 40.0);
  for (int y = 0; y < 6; ++y)
    for (int x = 3; x < 6; ++x) step(x, y) = 41.0;
  Frame edge = flat;
  for (int y = 0; y < 6; ++y)
    for (int x = 3; x < 6; ++x)
      for (int c = 0; c < 3; ++c) edge.at(x, y, c) = 1.0;
  const double plain = loss_ds(step, flat, all).value;
  CHECK(plain == doctest::Approx(6.0 / 36.0));
  CHECK(loss_ds(step, edge, all).value == doctest::Approx(6.0 * std::exp(-0.5) / 36.0));
  // Masking the step column removes the forward pair.
  PixelMask cut = all;
  for (int y = 0; y < 6; ++y) cut.set(3, y, false);
  CHECK(loss_ds(step, flat, cut).value == 0.0);
}

TEST_CASE("sphere-fit loss vanishes on spherical depth and respects the threshold") {
  const Intrinsics k = simple_intrinsics(40, 30, 200.0);
  EyeSpheres spheres;
  spheres.sclera = {0.5, -0.3, 60, 12, 0};
  spheres.cornea = {0, 0, 54, 7.8, 0};
  SegMap seg(40, 30, Label::sclera);
  for (int y = 8; y < 22; ++y)
    for (int x = 12; x < 28; ++x) seg.set(x, y, Label::cornea);
  const DepthMap d = sphere_depth(spheres, seg, k);
  const SflResult r = loss_sfl(d, seg, k, 0.1);
  CHECK_FALSE(r.cornea.skipped);
  CHECK_FALSE(r.sclera.skipped);
  CHECK(r.total() < 1e-20);
  CHECK(r.cornea.sphere.r == doctest::Approx(7.8).epsilon(1e-9));
  // Cornea covers 224 / 1200 pixels: below a 0.5 presence threshold.
  const SflResult strict = loss_sfl(d, seg, k, 0.5);
  CHECK(strict.cornea.skipped);
  CHECK(strict.cornea.loss == 0.0);
  CHECK_FALSE(strict.sclera.skipped);
  // Flat depth: degenerate, skipped rather than thrown.
  const SflResult flat = loss_sfl(DepthMap(40, 30, 50.0), seg, k, 0.1);
  CHECK(flat.cornea.skipped);
  CHECK(flat.sclera.skipped);
}

TEST_CASE("weight profiles") {
  const LossWeights p = weights_profile("paper");
  CHECK(p.alpha_srl == 0.85);
  CHECK(p.alpha_recon == 0.15);
  CHECK(p.alpha_ssim == 0.15);
  CHECK(p.alpha_ds == 0.04);
  CHECK(p.alpha_sfl == 10000.0);
  CHECK(p.sfl_threshold == 0.5);
  CHECK(weights_profile("synthetic").sfl_threshold == 0.1);
  const LossWeights b = weights_profile("baseline");
  CHECK(b.alpha_srl == 0.0);
  CHECK(b.alpha_sfl == 0.0);
  CHECK(b.alpha_recon == 0.85);
  CHECK_THROWS_AS(weights_profile("nope"), DomainError);

  LossWeights bad;
  bad.alpha_ds = -1;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_THROWS_AS(LossWeights::paper().scaled(0.0).validate(), DomainError);
  CHECK(LossWeights::paper().scaled(2.0).alpha_sfl == 20000.0);

  const auto cfg = KeyValueConfig::parse("alpha_sfl = 5\nsfl_threshold = 0.25\n");
  const LossWeights o = weights_from_config(cfg, LossWeights::paper());
  CHECK(o.alpha_sfl == 5.0);
  CHECK(o.sfl_threshold == 0.25);
  CHECK(o.alpha_srl == 0.85);
}

TEST_CASE("objective caches depth terms and validates its inputs") {
  std::mt19937_64 rng(14);
  PairInputs in = random_pair(rng, 16, 12, 1);
  PairObjective obj(in, LossWeights::paper());
  const LossReport before = obj.evaluate(Pose6DoF::identity());
  obj.set_depth(DepthMap(16, 12, 50.0));
  const LossReport after = obj.evaluate(Pose6DoF::identity());
  CHECK(after.ds == 0.0);
  CHECK(before.ds > 0.0);
  CHECK_THROWS_AS(obj.set_depth(DepthMap(15, 12, 1.0)), DomainError);
  const std::vector<Pose6DoF> two(2);
  CHECK_THROWS_AS(obj.evaluate(two), DomainError);

  PairInputs no_source = in;
  no_source.sources.clear();
  CHECK_THROWS_AS(PairObjective(no_source, LossWeights::paper()), DomainError);
  PairInputs wrong_k = in;
  wrong_k.k.width = 17;
  CHECK_THROWS_AS(wrong_k.validate(), DomainError);
}

TEST_CASE("half-resolution inputs") {
  std::mt19937_64 rng(15);
  PairInputs in = random_pair(rng, 9, 6, 1);
  SegMap seg(9, 6, Label::cornea);
  seg.set(0, 0, Label::sclera);
  seg.set(1, 0, Label::sclera);
  seg.set(0, 1, Label::eyelid);
  seg.set(2, 0, Label::eyelid);
  seg.set(3, 0, Label::eyelid);
  seg.set(2, 1, Label::sclera);
  seg.set(3, 1, Label::sclera);
  in.target_seg = seg;
  const PairInputs half = in.downsampled();
  CHECK(half.target.width() == 4);
  CHECK(half.target.height() == 3);
  CHECK(half.k.width == 4);
  CHECK(half.target_seg(0, 0) == Label::sclera);  // 2 sclera, 1 eyelid, 1 cornea
  CHECK(half.target_seg(1, 0) == Label::eyelid);  // 2-2 tie goes to the lower label
  CHECK(half.target_depth(1, 1) ==
        doctest::Approx(0.25 * (in.target_depth(2, 2) + in.target_depth(3, 2) +
                                in.target_depth(2, 3) + in.target_depth(3, 3))));
  CHECK(half.k.fx == doctest::Approx(in.k.fx / 2));
}

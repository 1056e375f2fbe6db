#include "ocumap/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ocumap/errors.hpp"

namespace ocumap {

const char* label_name(Label label) {
  switch (label) {
    case Label::eyelid:
      return "eyelid";
    case Label::sclera:
      return "sclera";
    case Label::cornea:
      return "cornea";
  }
  return "unknown";
}

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels <= 0) {
    throw DomainError("image dimensions must be non-negative with at least one channel");
  }
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

Image Image::channel_slice(int first, int count) const {
  if (first < 0 || count <= 0 || first + count > channels_) {
    throw DomainError("channel slice out of range");
  }
  Image out(width_, height_, count);
  const std::size_t n = pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < count; ++c) {
      out.data_[i * static_cast<std::size_t>(count) + static_cast<std::size_t>(c)] =
          data_[i * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(first + c)];
    }
  }
  return out;
}

Frame::Frame(Image image) : Image(std::move(image)) {
  if (channels() != 3) {
    throw DomainError("frame requires 3 channels, got " + std::to_string(channels()));
  }
}

bool Frame::in_range() const {
  return std::all_of(data().begin(), data().end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

DepthMap::DepthMap(Image image) : Image(std::move(image)) {
  if (channels() != 1) {
    throw DomainError("depth map requires 1 channel, got " + std::to_string(channels()));
  }
}

PixelMask::PixelMask(int width, int height, bool fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw DomainError("mask dimensions must be non-negative");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
               fill ? 1 : 0);
}

std::size_t PixelMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

PixelMask operator&(const PixelMask& a, const PixelMask& b) {
  if (a.width_ != b.width_ || a.height_ != b.height_) {
    throw DomainError("mask dimensions differ");
  }
  PixelMask out(a.width_, a.height_, false);
  for (std::size_t i = 0; i < a.bits_.size(); ++i) out.bits_[i] = a.bits_[i] & b.bits_[i];
  return out;
}

PixelMask operator|(const PixelMask& a, const PixelMask& b) {
  if (a.width_ != b.width_ || a.height_ != b.height_) {
    throw DomainError("mask dimensions differ");
  }
  PixelMask out(a.width_, a.height_, false);
  for (std::size_t i = 0; i < a.bits_.size(); ++i) out.bits_[i] = a.bits_[i] | b.bits_[i];
  return out;
}

SegMap::SegMap(int width, int height, Label fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw DomainError("segmap dimensions must be non-negative");
  labels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

std::size_t SegMap::count(Label label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

Image SegMap::onehot() const {
  Image out(width_, height_, kNumLabels, 0.0);
  auto data = out.data();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    data[i * kNumLabels + static_cast<std::size_t>(labels_[i])] = 1.0;
  }
  return out;
}

bool bilinear_sample(const Image& raster, double u, double v, std::span<double> out) {
  const int channels = raster.channels();
  const int w = raster.width();
  const int h = raster.height();
  const bool inside = w > 0 && h > 0 && u >= 0.0 && v >= 0.0 &&
                      u <= static_cast<double>(w - 1) && v <= static_cast<double>(h - 1);
  if (!inside) {
    std::fill(out.begin(), out.begin() + channels, 0.0);
    return false;
  }
  // Clamp the base cell so that u == w-1 interpolates with weight 1 on the
  // last column instead of reading past the edge.
  const int x0 = std::min(static_cast<int>(u), std::max(w - 2, 0));
  const int y0 = std::min(static_cast<int>(v), std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = u - x0;
  const double ay = v - y0;
  const double w00 = (1.0 - ax) * (1.0 - ay);
  const double w10 = ax * (1.0 - ay);
  const double w01 = (1.0 - ax) * ay;
  const double w11 = ax * ay;
  const double* p00 = raster.pixel(x0, y0);
  const double* p10 = raster.pixel(x1, y0);
  const double* p01 = raster.pixel(x0, y1);
  const double* p11 = raster.pixel(x1, y1);
  for (int c = 0; c < channels; ++c) {
    out[static_cast<std::size_t>(c)] = w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c];
  }
  return true;
}

double bilinear_sample(const Image& raster, double u, double v, bool* in_bounds) {
  if (raster.channels() != 1) throw DomainError("scalar bilinear_sample needs a 1-channel raster");
  double value = 0.0;
  const bool ok = bilinear_sample(raster, u, v, std::span<double>(&value, 1));
  if (in_bounds != nullptr) *in_bounds = ok;
  return value;
}

Gradients gradients(const Image& raster) {
  const int w = raster.width();
  const int h = raster.height();
  const int channels = raster.channels();
  if (w < 2 || h < 2) {
    throw DomainError("gradients need a raster of at least 2x2 pixels");
  }
  Gradients g{Image(w, h, channels, 0.0), Image(w, h, channels, 0.0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* p = raster.pixel(x, y);
      double* gx = g.dx.pixel(x, y);
      double* gy = g.dy.pixel(x, y);
      if (x + 1 < w) {
        const double* right = raster.pixel(x + 1, y);
        for (int c = 0; c < channels; ++c) gx[c] = right[c] - p[c];
      }
      if (y + 1 < h) {
        const double* below = raster.pixel(x, y + 1);
        for (int c = 0; c < channels; ++c) gy[c] = below[c] - p[c];
      }
    }
  }
  return g;
}

PixelMask eyelid_mask(const SegMap& seg) {
  PixelMask mask(seg.width(), seg.height(), false);
  for (int y = 0; y < seg.height(); ++y) {
    for (int x = 0; x < seg.width(); ++x) mask.set(x, y, seg(x, y) != Label::eyelid);
  }
  return mask;
}

PixelMask label_mask(const SegMap& seg, Label label) {
  PixelMask mask(seg.width(), seg.height(), false);
  for (int y = 0; y < seg.height(); ++y) {
    for (int x = 0; x < seg.width(); ++x) mask.set(x, y, seg(x, y) == label);
  }
  return mask;
}

Image gaussian_blur(const Image& raster, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("gaussian_blur: sigma must be non-negative");
  if (sigma == 0.0) return raster;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& v : kernel) v /= sum;

  const int w = raster.width();
  const int h = raster.height();
  const int channels = raster.channels();
  Image tmp(w, h, channels, 0.0);
  Image out(w, h, channels, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* dst = tmp.pixel(x, y);
      for (int i = -radius; i <= radius; ++i) {
        const double* src = raster.pixel(std::clamp(x + i, 0, w - 1), y);
        for (int c = 0; c < channels; ++c) dst[c] += kernel[i + radius] * src[c];
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* dst = out.pixel(x, y);
      for (int i = -radius; i <= radius; ++i) {
        const double* src = tmp.pixel(x, std::clamp(y + i, 0, h - 1));
        for (int c = 0; c < channels; ++c) dst[c] += kernel[i + radius] * src[c];
      }
    }
  }
  return out;
}

}  // namespace ocumap

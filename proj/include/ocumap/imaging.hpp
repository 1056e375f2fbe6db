#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ocumap {

// Segmentation classes. The numeric values are the on-disk label indices.
enum class Label : std::uint8_t { eyelid = 0, sclera = 1, cornea = 2 };

inline constexpr int kNumLabels = 3;

const char* label_name(Label label);

// Interleaved row-major raster of doubles.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  // Pointer to the first channel of pixel (x, y).
  double* pixel(int x, int y) { return data_.data() + index(x, y, 0); }
  const double* pixel(int x, int y) const { return data_.data() + index(x, y, 0); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_size(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  bool same_shape(const Image& other) const {
    return same_size(other) && channels_ == other.channels_;
  }

  // Copies channels [first, first + count) into a new image.
  Image channel_slice(int first, int count) const;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// RGB raster with intensities normalized to [0, 1].
class Frame : public Image {
 public:
  Frame() = default;
  Frame(int width, int height, double fill = 0.0) : Image(width, height, 3, fill) {}
  // Adopts a 3-channel image; throws DomainError on any other channel count.
  explicit Frame(Image image);

  // True when every intensity lies in [0, 1].
  bool in_range() const;
};

// Per-pixel depth along the optical axis, in scene units (mm).
class DepthMap : public Image {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0) : Image(width, height, 1, fill) {}
  explicit DepthMap(Image image);

  double operator()(int x, int y) const { return at(x, y); }
  double& operator()(int x, int y) { return at(x, y); }
};

class PixelMask {
 public:
  PixelMask() = default;
  PixelMask(int width, int height, bool fill = true);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return bits_.size(); }

  bool operator()(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool value) { bits_[index(x, y)] = value ? 1 : 0; }

  std::size_t count() const;
  bool matches(const Image& image) const {
    return width_ == image.width() && height_ == image.height();
  }

  std::span<const std::uint8_t> bits() const { return bits_; }

  friend PixelMask operator&(const PixelMask& a, const PixelMask& b);
  friend PixelMask operator|(const PixelMask& a, const PixelMask& b);
  friend bool operator==(const PixelMask&, const PixelMask&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

class SegMap {
 public:
  SegMap() = default;
  SegMap(int width, int height, Label fill = Label::eyelid);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return labels_.size(); }

  Label operator()(int x, int y) const { return labels_[index(x, y)]; }
  void set(int x, int y, Label label) { labels_[index(x, y)] = label; }

  std::span<const Label> labels() const { return labels_; }

  std::size_t count(Label label) const;

  // Three-channel soft encoding; channel index equals the label value.
  Image onehot() const;

  friend bool operator==(const SegMap&, const SegMap&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Label> labels_;
};

// Bilinear interpolation at (u, v). Writes one value per channel into `out`
// and returns true when (u, v) lies in [0, width-1] x [0, height-1].
// Out-of-bounds locations write zeros and return false.
bool bilinear_sample(const Image& raster, double u, double v, std::span<double> out);

// Single-channel convenience overload; returns 0 when out of bounds.
double bilinear_sample(const Image& raster, double u, double v, bool* in_bounds = nullptr);

struct Gradients {
  Image dx;
  Image dy;
};

// Forward differences per channel. The last column of dx and the last row of
// dy are zero. Requires width and height of at least 2.
Gradients gradients(const Image& raster);

// Separable Gaussian filter with edge clamping; the kernel is truncated at
// 3 sigma. sigma == 0 returns a copy.
Image gaussian_blur(const Image& raster, double sigma);

// True exactly where the label is not eyelid.
PixelMask eyelid_mask(const SegMap& seg);

// True where the label equals `label`.
PixelMask label_mask(const SegMap& seg, Label label);

}  // namespace ocumap

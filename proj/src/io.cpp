#include "ocumap/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ocumap/errors.hpp"

namespace ocumap {
namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

struct NetpbmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

// Parses "P5"/"P6" headers, including '#' comments between tokens.
NetpbmHeader parse_netpbm(const std::vector<unsigned char>& bytes, const char* magic,
                          const std::string& name) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw ParseError(name + ": bad magic at offset 0, expected " + magic);
  }
  std::size_t pos = 2;
  auto next_int = [&](const char* field) {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) {
        throw ParseError(name + ": field " + field + " too large at offset " +
                         std::to_string(start));
      }
      ++pos;
    }
    if (pos == start) {
      throw ParseError(name + ": missing or malformed field " + std::string(field) +
                       " at offset " + std::to_string(start));
    }
    return static_cast<int>(value);
  };
  NetpbmHeader h;
  h.width = next_int("width");
  h.height = next_int("height");
  h.maxval = next_int("maxval");
  if (h.width <= 0 || h.height <= 0) throw ParseError(name + ": field width/height must be positive");
  if (h.maxval <= 0 || h.maxval > 255) {
    throw ParseError(name + ": field maxval must be in 1..255, got " + std::to_string(h.maxval));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw ParseError(name + ": expected single whitespace after maxval at offset " +
                     std::to_string(pos));
  }
  h.data_offset = pos + 1;
  return h;
}

std::vector<unsigned char> netpbm_header(const char* magic, int width, int height) {
  const std::string text = std::string(magic) + "\n" + std::to_string(width) + " " +
                           std::to_string(height) + "\n255\n";
  return {text.begin(), text.end()};
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

template <typename T, typename U>
void put_le(std::vector<unsigned char>& out, T value) {
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu));
  }
}

template <typename T, typename U>
T get_le(const std::vector<unsigned char>& in, std::size_t offset) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(in[offset + i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

constexpr char kDepthMagic[4] = {'O', 'D', 'P', 'T'};
constexpr std::size_t kDepthHeaderSize = 16;

}  // namespace

Frame read_frame(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const NetpbmHeader h = parse_netpbm(bytes, "P6", path.string());
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() < h.data_offset + need) {
    throw ParseError(path.string() + ": truncated pixel data at offset " +
                     std::to_string(bytes.size()) + ", expected " +
                     std::to_string(h.data_offset + need) + " bytes");
  }
  Frame frame(h.width, h.height);
  auto data = frame.data();
  const double scale = 1.0 / h.maxval;
  for (std::size_t i = 0; i < need; ++i) {
    data[i] = std::min(1.0, bytes[h.data_offset + i] * scale);
  }
  return frame;
}

void write_frame(const std::filesystem::path& path, const Frame& frame) {
  auto bytes = netpbm_header("P6", frame.width(), frame.height());
  for (double v : frame.data()) {
    const double clamped = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    bytes.push_back(static_cast<unsigned char>(std::lround(clamped * 255.0)));
  }
  spit(path, bytes);
}

SegMap read_segmap(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const NetpbmHeader h = parse_netpbm(bytes, "P5", path.string());
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + need) {
    throw ParseError(path.string() + ": truncated label data at offset " +
                     std::to_string(bytes.size()) + ", expected " +
                     std::to_string(h.data_offset + need) + " bytes");
  }
  SegMap seg(h.width, h.height);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      const std::size_t offset = h.data_offset + static_cast<std::size_t>(y) * h.width + x;
      const unsigned char v = bytes[offset];
      if (v >= kNumLabels) {
        throw ParseError(path.string() + ": invalid label " + std::to_string(v) +
                         " at offset " + std::to_string(offset));
      }
      seg.set(x, y, static_cast<Label>(v));
    }
  }
  return seg;
}

void write_segmap(const std::filesystem::path& path, const SegMap& seg) {
  auto bytes = netpbm_header("P5", seg.width(), seg.height());
  for (Label l : seg.labels()) bytes.push_back(static_cast<unsigned char>(l));
  spit(path, bytes);
}

DepthMap read_depth(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string name = path.string();
  if (bytes.size() < kDepthHeaderSize) {
    throw ParseError(name + ": truncated header (" + std::to_string(bytes.size()) +
                     " bytes, need 16)");
  }
  if (std::memcmp(bytes.data(), kDepthMagic, 4) != 0) {
    throw ParseError(name + ": bad magic at offset 0, expected ODPT");
  }
  const std::uint32_t bits = get_u32(bytes, 4);
  if (bits != 32 && bits != 64) {
    throw ParseError(name + ": field bits_per_sample at offset 4 must be 32 or 64, got " +
                     std::to_string(bits));
  }
  const std::uint32_t width = get_u32(bytes, 8);
  const std::uint32_t height = get_u32(bytes, 12);
  if (width == 0 || height == 0 || width > 1'000'000 || height > 1'000'000) {
    throw ParseError(name + ": field width/height at offset 8 out of range");
  }
  const std::size_t sample = bits / 8;
  const std::size_t need = kDepthHeaderSize + static_cast<std::size_t>(width) * height * sample;
  if (bytes.size() < need) {
    throw ParseError(name + ": truncated sample data at offset " + std::to_string(bytes.size()) +
                     ", expected " + std::to_string(need) + " bytes");
  }
  DepthMap depth(static_cast<int>(width), static_cast<int>(height));
  auto data = depth.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t offset = kDepthHeaderSize + i * sample;
    data[i] = bits == 32 ? static_cast<double>(get_le<float, std::uint32_t>(bytes, offset))
                         : get_le<double, std::uint64_t>(bytes, offset);
    if (!std::isfinite(data[i])) {
      throw ParseError(name + ": non-finite depth sample at offset " + std::to_string(offset));
    }
  }
  return depth;
}

void write_depth(const std::filesystem::path& path, const DepthMap& depth,
                 DepthPrecision precision) {
  std::vector<unsigned char> bytes(kDepthMagic, kDepthMagic + 4);
  put_u32(bytes, static_cast<std::uint32_t>(precision));
  put_u32(bytes, static_cast<std::uint32_t>(depth.width()));
  put_u32(bytes, static_cast<std::uint32_t>(depth.height()));
  for (double v : depth.data()) {
    if (precision == DepthPrecision::float32) {
      put_le<float, std::uint32_t>(bytes, static_cast<float>(v));
    } else {
      put_le<double, std::uint64_t>(bytes, v);
    }
  }
  spit(path, bytes);
}

void write_mask(const std::filesystem::path& path, const PixelMask& mask) {
  auto bytes = netpbm_header("P5", mask.width(), mask.height());
  for (auto b : mask.bits()) bytes.push_back(b != 0 ? 255 : 0);
  spit(path, bytes);
}

void write_gray(const std::filesystem::path& path, int width, int height,
                std::span<const std::uint8_t> levels) {
  if (width <= 0 || height <= 0 ||
      levels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw DomainError("write_gray: level count does not match the raster size");
  }
  auto bytes = netpbm_header("P5", width, height);
  bytes.insert(bytes.end(), levels.begin(), levels.end());
  spit(path, bytes);
}

std::string read_text(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = slurp(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  spit(path, std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace ocumap

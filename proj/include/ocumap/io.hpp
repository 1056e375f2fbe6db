#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "ocumap/imaging.hpp"

namespace ocumap {

// Frames are binary PPM (P6, maxval 255). Reading normalizes to [0, 1];
// writing clamps to [0, 1] and rounds to the nearest 8-bit level.
Frame read_frame(const std::filesystem::path& path);
void write_frame(const std::filesystem::path& path, const Frame& frame);

// Segmentation maps are binary PGM (P5, maxval 255) whose gray levels are the
// label indices 0 (eyelid), 1 (sclera), 2 (cornea).
SegMap read_segmap(const std::filesystem::path& path);
void write_segmap(const std::filesystem::path& path, const SegMap& seg);

// Depth raster layout, all integers little-endian uint32:
//   bytes 0..3   magic "ODPT"
//   bytes 4..7   bits per sample, 32 or 64
//   bytes 8..11  width
//   bytes 12..15 height
//   then width*height IEEE-754 little-endian samples, row-major.
enum class DepthPrecision { float32 = 32, float64 = 64 };

DepthMap read_depth(const std::filesystem::path& path);
void write_depth(const std::filesystem::path& path, const DepthMap& depth,
                 DepthPrecision precision = DepthPrecision::float32);

// Binary 0/255 PGM, used for coverage and validity masks.
void write_mask(const std::filesystem::path& path, const PixelMask& mask);

// Binary PGM with the given gray levels, row-major.
void write_gray(const std::filesystem::path& path, int width, int height,
                std::span<const std::uint8_t> levels);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ocumap

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace aupt {

/// 8-bit raster, interleaved channels, row-major. channels is 1 (gray) or 3 (RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), pixels(std::size_t(w) * h * c, 0) {}

  std::uint8_t& at(int x, int y, int c = 0) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c = 0) const { return pixels[(std::size_t(y) * width + x) * channels + c]; }

  bool operator==(const Image&) const = default;
};

/// Decodes PNG (8-bit gray, gray+alpha, RGB, RGBA; alpha dropped) and binary
/// PGM/PPM. Throws std::runtime_error on unreadable or unsupported files.
Image read_image(const std::filesystem::path& path);

/// Lossless PNG; 1 or 3 channels.
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace aupt

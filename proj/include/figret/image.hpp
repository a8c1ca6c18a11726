#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace figret {

// Single-channel raster, row-major, values in [0,1]. 1 is paper white, 0 is ink.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 1.0f);

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool empty() const { return width == 0 || height == 0; }

  // Throws StructuralError / ParameterError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PGM (P5), maxval 255. Values are quantized with round(p * 255).
std::string encode_pgm(const Image& img);
Image decode_pgm(std::string_view bytes);
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

// Area-averaging resample to the requested size.
Image resize_area(const Image& img, int width, int height);

// Snap every pixel to the nearest k/255 so a PGM round trip is exact.
void quantize_to_8bit(Image& img);

Image crop(const Image& img, int x0, int y0, int w, int h);

}  // namespace figret

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace sqtk {

// Interleaved RGB image with float channels in [0, 1]. PNG round trips
// through 8-bit, so persisted pixels are quantized to multiples of 1/255.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> px;  // height * width * 3

  Image() = default;
  Image(int w, int h) : width(w), height(h), px(static_cast<std::size_t>(w) * h * 3, 0.f) {}

  float* at(int x, int y) { return px.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* at(int x, int y) const {
    return px.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool empty() const { return px.empty(); }
};

// 8-bit quantized pixel buffer, the form images take on disk and in dataset
// caches.
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> px;  // height * width * 3
};

RawImage quantize(const Image& img);
Image dequantize(const RawImage& raw);

void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const RawImage& img);
RawImage read_png(const std::filesystem::path& path);

// Bilinear resampling with half-pixel centers (src = (dst + 0.5) * scale - 0.5).
Image resize_bilinear(const Image& src, int out_w, int out_h);

Image crop(const Image& src, int x0, int y0, int w, int h);

void fill(Image& img, const std::array<float, 3>& rgb);
void draw_rect(Image& img, int x0, int y0, int x1, int y1,
               const std::array<float, 3>& rgb, int thickness = 1);

// Binary PGM (P5), value 255 for true. Used for attention mask dumps.
void write_pgm(const std::filesystem::path& path,
               const std::vector<std::uint8_t>& data, int width, int height);

}  // namespace sqtk

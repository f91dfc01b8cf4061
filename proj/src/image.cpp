#include "sqtk/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sqtk/common.hpp"

namespace sqtk {

RawImage quantize(const Image& img) {
  RawImage raw;
  raw.width = img.width;
  raw.height = img.height;
  raw.px.resize(img.px.size());
  for (std::size_t i = 0; i < img.px.size(); ++i) {
    float v = std::clamp(img.px[i], 0.f, 1.f);
    raw.px[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
  }
  return raw;
}

Image dequantize(const RawImage& raw) {
  Image img(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.px.size(); ++i)
    img.px[i] = static_cast<float>(raw.px[i]) / 255.f;
  return img;
}

void write_png(const std::filesystem::path& path, const RawImage& img) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw DataError("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("write_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.px.data() + static_cast<std::size_t>(y) * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void write_png(const std::filesystem::path& path, const Image& img) {
  write_png(path, quantize(img));
}

RawImage read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw DataError("read_png: cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("read_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  RawImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.px.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.px.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

Image resize_bilinear(const Image& src, int out_w, int out_h) {
  if (src.empty() || out_w <= 0 || out_h <= 0)
    throw ContractViolation("resize_bilinear: empty input or non-positive output size");
  Image dst(out_w, out_h);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int ya = std::clamp(y0, 0, src.height - 1);
    int yb = std::clamp(y0 + 1, 0, src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int xa = std::clamp(x0, 0, src.width - 1);
      int xb = std::clamp(x0 + 1, 0, src.width - 1);
      const float* p00 = src.at(xa, ya);
      const float* p10 = src.at(xb, ya);
      const float* p01 = src.at(xa, yb);
      const float* p11 = src.at(xb, yb);
      float* out = dst.at(x, y);
      for (int c = 0; c < 3; ++c) {
        double top = p00[c] * (1.0 - wx) + p10[c] * wx;
        double bot = p01[c] * (1.0 - wx) + p11[c] * wx;
        out[c] = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return dst;
}

Image crop(const Image& src, int x0, int y0, int w, int h) {
  if (w <= 0 || h <= 0 || x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height)
    throw ContractViolation("crop: region outside image");
  Image dst(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(src.at(x0, y0 + y), static_cast<std::size_t>(w) * 3, dst.at(0, y));
  return dst;
}

void fill(Image& img, const std::array<float, 3>& rgb) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      float* p = img.at(x, y);
      p[0] = rgb[0];
      p[1] = rgb[1];
      p[2] = rgb[2];
    }
}

void draw_rect(Image& img, int x0, int y0, int x1, int y1,
               const std::array<float, 3>& rgb, int thickness) {
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    float* p = img.at(x, y);
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = x0 - t; x <= x1 + t; ++x) {
      put(x, y0 - t);
      put(x, y1 + t);
    }
    for (int y = y0 - t; y <= y1 + t; ++y) {
      put(x0 - t, y);
      put(x1 + t, y);
    }
  }
}

void write_pgm(const std::filesystem::path& path,
               const std::vector<std::uint8_t>& data, int width, int height) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_pgm: cannot open " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  for (std::uint8_t v : data) out.put(static_cast<char>(v ? 255 : 0));
}

}  // namespace sqtk

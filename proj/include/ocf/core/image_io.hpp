#pragma once

#include <png.h>

#include <cstdio>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocf/core/tensor.hpp"

namespace ocf {

// 8-bit image buffer, row-major, channels interleaved (1=gray, 3=RGB, 4=RGBA).
struct Image8 {
  int height = 0, width = 0, channels = 0;
  std::vector<uint8_t> pixels;

  Image8() = default;
  Image8(int h, int w, int c) : height(h), width(w), channels(c), pixels(size_t(h) * w * c, 0) {}

  uint8_t& at(int i, int j, int c) { return pixels[(size_t(i) * width + j) * channels + c]; }
  uint8_t at(int i, int j, int c) const { return pixels[(size_t(i) * width + j) * channels + c]; }
};

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
}  // namespace detail

// Writes gray (1ch), RGB (3ch) or RGBA (4ch). Output carries no timestamp
// chunk, so identical pixels yield identical files.
inline void write_png(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3 && img.channels != 4)
    throw std::invalid_argument("write_png: unsupported channel count " +
                                std::to_string(img.channels));
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng error while writing " + path);
  }
  png_init_io(png, fp.get());
  int color = img.channels == 1   ? PNG_COLOR_TYPE_GRAY
              : img.channels == 3 ? PNG_COLOR_TYPE_RGB
                                  : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int i = 0; i < img.height; ++i)
    rows[i] = const_cast<png_bytep>(img.pixels.data() + size_t(i) * img.width * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads any PNG into 8-bit gray/RGB/RGBA (paletted and 16-bit inputs are
// converted; gray+alpha expands to RGBA).
inline Image8 read_png(const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng error while reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  Image8 img(static_cast<int>(h), static_cast<int>(w), channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 i = 0; i < h; ++i)
    rows[i] = img.pixels.data() + size_t(i) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// [0,1] tensor (C,H,W) <-> interleaved 8-bit conversions.
inline Image8 tensor_to_image8(const Tensor& t) {
  if (t.rank() != 3) throw std::invalid_argument("tensor_to_image8: expected (C,H,W)");
  int C = t.dim(0), H = t.dim(1), W = t.dim(2);
  Image8 img(H, W, C);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double v = t.at(c, i, j);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        img.at(i, j, c) = static_cast<uint8_t>(v * 255.0 + 0.5);
      }
  return img;
}

inline Tensor image8_to_tensor(const Image8& img) {
  Tensor t(Shape{img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int i = 0; i < img.height; ++i)
      for (int j = 0; j < img.width; ++j) t.at(c, i, j) = img.at(i, j, c) / 255.0;
  return t;
}

}  // namespace ocf

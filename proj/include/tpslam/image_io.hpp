#pragma once

// PNG reading and writing through libpng: 8-bit RGB color and 16-bit gray depth.

#include "tpslam/common.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

namespace tpslam {

struct Image8 {
  int width = 0, height = 0, channels = 3;
  std::vector<std::uint8_t> data;
};

struct Image16 {
  int width = 0, height = 0;
  std::vector<std::uint16_t> data;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DatasetError("cannot open " + path);
  return f;
}

/// Reads any PNG, converted to 8-bit (or 16-bit if `keep16`) with `want` channels.
inline void read_png_raw(const std::string& path, bool keep16, int want, int& w, int& h,
                         std::vector<std::uint8_t>& rows_out) {
  auto f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw DatasetError("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DatasetError("corrupt PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (!keep16 && depth == 16) png_set_strip_16(png);
  if (keep16 && depth == 16) png_set_swap(png);  // host little-endian
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (want == 3 && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)) {
    png_set_gray_to_rgb(png);
  }
  if (want == 1 && (color & PNG_COLOR_MASK_COLOR)) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  w = int(png_get_image_width(png, info));
  h = int(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  rows_out.resize(stride * std::size_t(h));
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = rows_out.data() + stride * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
}

inline void write_png_raw(const std::string& path, int w, int h, int bit_depth, int color_type,
                          const std::uint8_t* data, std::size_t stride) {
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw Error("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing PNG: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  for (int y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(data + stride * y));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline Image8 read_png_rgb(const std::string& path) {
  Image8 img;
  detail::read_png_raw(path, false, 3, img.width, img.height, img.data);
  return img;
}

inline Image16 read_png_depth(const std::string& path) {
  Image16 img;
  std::vector<std::uint8_t> raw;
  detail::read_png_raw(path, true, 1, img.width, img.height, raw);
  const std::size_t n = std::size_t(img.width) * img.height;
  img.data.resize(n);
  if (raw.size() == 2 * n) {
    std::memcpy(img.data.data(), raw.data(), raw.size());
  } else {
    for (std::size_t i = 0; i < n; ++i) img.data[i] = raw[i];  // 8-bit depth image
  }
  return img;
}

inline void write_png_rgb(const std::string& path, const Image8& img) {
  detail::write_png_raw(path, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, img.data.data(),
                        std::size_t(img.width) * 3);
}

inline void write_png_depth(const std::string& path, const Image16& img) {
  detail::write_png_raw(path, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY,
                        reinterpret_cast<const std::uint8_t*>(img.data.data()),
                        std::size_t(img.width) * 2);
}

}  // namespace tpslam

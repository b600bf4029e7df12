#pragma once

// Grayscale image I/O (binary PGM, PNG), 5x5 average pooling and conversion
// to the encoder's input tensor.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mvclip/tensor.hpp"

namespace mvclip {

struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int bit_depth = 8;  // 8 or 16 bits per stored sample
  std::vector<std::uint16_t> samples;  // row-major, height x width

  RawImage() = default;
  RawImage(std::size_t w, std::size_t h, int depth, std::uint16_t fill = 0)
      : width(w), height(h), bit_depth(depth), samples(w * h, fill) {
    if (w == 0 || h == 0) throw ValidationError("image dimensions must be positive");
  }

  std::uint16_t& at(std::size_t x, std::size_t y) { return samples[y * width + x]; }
  std::uint16_t at(std::size_t x, std::size_t y) const { return samples[y * width + x]; }
};

// Output extent ceil(in / 5) per axis. Edge windows average only the pixels
// they cover; means are rounded to the nearest integer.
inline RawImage avg_pool_5x5(const RawImage& in) {
  constexpr std::size_t k = 5;
  RawImage out((in.width + k - 1) / k, (in.height + k - 1) / k, in.bit_depth);
  for (std::size_t oy = 0; oy < out.height; ++oy) {
    const std::size_t y1 = std::min(in.height, (oy + 1) * k);
    for (std::size_t ox = 0; ox < out.width; ++ox) {
      const std::size_t x1 = std::min(in.width, (ox + 1) * k);
      std::uint64_t total = 0, count = 0;
      for (std::size_t y = oy * k; y < y1; ++y)
        for (std::size_t x = ox * k; x < x1; ++x, ++count) total += in.at(x, y);
      out.at(ox, oy) = static_cast<std::uint16_t>((2 * total + count) / (2 * count));
    }
  }
  return out;
}

// Bilinear resize of a float plane with half-pixel centers and edge clamping.
inline std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t sw, std::size_t sh,
                                          std::size_t dw, std::size_t dh) {
  std::vector<float> dst(dw * dh);
  const double fx = static_cast<double>(sw) / static_cast<double>(dw);
  const double fy = static_cast<double>(sh) / static_cast<double>(dh);
  for (std::size_t y = 0; y < dh; ++y) {
    const double sy = std::clamp((static_cast<double>(y) + 0.5) * fy - 0.5, 0.0, static_cast<double>(sh - 1));
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, sh - 1);
    const double wy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dw; ++x) {
      const double sx = std::clamp((static_cast<double>(x) + 0.5) * fx - 0.5, 0.0, static_cast<double>(sw - 1));
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, sw - 1);
      const double wx = sx - static_cast<double>(x0);
      const double top = src[y0 * sw + x0] * (1 - wx) + src[y0 * sw + x1] * wx;
      const double bottom = src[y1 * sw + x0] * (1 - wx) + src[y1 * sw + x1] * wx;
      dst[y * dw + x] = static_cast<float>(top * (1 - wy) + bottom * wy);
    }
  }
  return dst;
}

// Linear min-max rescale to [0, 255], bilinear resize to size x size, and
// replication into `channels` identical planes. Returns [size, size, channels].
inline Tensor<float> to_model_input(const RawImage& raw, std::size_t size = 224, std::size_t channels = 3) {
  const auto [lo_it, hi_it] = std::minmax_element(raw.samples.begin(), raw.samples.end());
  const double lo = *lo_it, range = static_cast<double>(*hi_it) - lo;
  std::vector<float> plane(raw.samples.size(), 0.0f);
  if (range == 0.0) {
    std::cerr << "warning: image has zero dynamic range; using all-zero input\n";
  } else {
    for (std::size_t i = 0; i < plane.size(); ++i) {
      plane[i] = static_cast<float>((raw.samples[i] - lo) * 255.0 / range);
    }
  }
  if (raw.width != size || raw.height != size) plane = resize_bilinear(plane, raw.width, raw.height, size, size);
  std::vector<float> out(size * size * channels);
  for (std::size_t i = 0; i < size * size; ++i)
    for (std::size_t c = 0; c < channels; ++c) out[i * channels + c] = plane[i];
  return Tensor<float>({size, size, channels}, std::move(out));
}

// Binary PGM (P5). Samples above 255 are stored as 16-bit big-endian.
inline void write_pgm(const std::string& path, const RawImage& img, std::uint16_t maxval) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out << "P5\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';
  for (std::uint16_t v : img.samples) {
    if (maxval > 255) out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
  if (!out) throw IoError("failed writing image '" + path + "'");
}

inline RawImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError("'" + path + "' is not a binary PGM");
  auto next_number = [&]() {
    for (;;) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      std::size_t v = 0;
      if (!(in >> v)) throw IoError("malformed PGM header in '" + path + "'");
      return v;
    }
  };
  const std::size_t w = next_number(), h = next_number(), maxval = next_number();
  in.get();
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw IoError("bad PGM header in '" + path + "'");
  const bool wide = maxval > 255;
  RawImage img(w, h, wide ? 16 : 8);
  for (auto& v : img.samples) {
    const int a = in.get();
    v = static_cast<std::uint16_t>(a);
    if (wide) v = static_cast<std::uint16_t>((a << 8) | in.get());
  }
  if (!in) throw IoError("truncated PGM data in '" + path + "'");
  return img;
}

namespace detail {

struct PngFile {
  FILE* fp = nullptr;
  ~PngFile() {
    if (fp) std::fclose(fp);
  }
};

}  // namespace detail

// 8- or 16-bit PNG; color images are converted to gray by libpng.
inline RawImage read_png(const std::string& path) {
  detail::PngFile file{std::fopen(path.c_str(), "rb")};
  if (!file.fp) throw IoError("cannot read image '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG '" + path + "'");
  }
  png_init_io(png, file.fp);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * h);
  rows.resize(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  img = RawImage(w, h, depth == 16 ? 16 : 8);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (depth == 16) {
        std::uint16_t v;
        std::memcpy(&v, rows[y] + 2 * x, 2);
        img.at(x, y) = v;
      } else {
        img.at(x, y) = rows[y][x];
      }
    }
  }
  return img;
}

inline void write_png(const std::string& path, const RawImage& img) {
  detail::PngFile file{std::fopen(path.c_str(), "wb")};
  if (!file.fp) throw IoError("cannot write image '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const bool wide = img.bit_depth == 16;
  std::vector<std::uint8_t> buffer(img.width * img.height * (wide ? 2 : 1));
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    if (wide) {
      buffer[2 * i] = static_cast<std::uint8_t>(img.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<std::uint8_t>(img.samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<std::uint8_t>(img.samples[i]);
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * img.width * (wide ? 2 : 1);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG '" + path + "'");
  }
  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), wide ? 16 : 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Dispatches on the file extension (.png, otherwise PGM).
inline RawImage read_image(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" ? read_png(path) : read_pgm(path);
}

}  // namespace mvclip

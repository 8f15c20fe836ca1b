#pragma once

// PNG input/output for label maps (16-bit gray) and RGB images (8-bit).

#include <bit>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "aphid/error.hpp"
#include "aphid/geometry.hpp"

namespace aphid {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height

  /// Copies the window [x, x+w) x [y, y+h); the window must lie inside.
  RgbImage crop(const BBox& window) const {
    RgbImage out{window.width(), window.height(), {}};
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    for (int row = 0; row < out.height; ++row) {
      const auto* src = pixels.data() + (static_cast<std::size_t>(window.min_y() + row) * width + window.min_x()) * 3;
      std::copy(src, src + static_cast<std::size_t>(out.width) * 3,
                out.pixels.data() + static_cast<std::size_t>(row) * out.width * 3);
    }
    return out;
  }
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

struct PngRawImage {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<png_byte> bytes;
};

// Kept free of objects with destructors between setjmp and any longjmp.
inline bool png_read_raw(std::FILE* fp, PngRawImage* out, bool want_gray16) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  png_bytepp volatile rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    png_free(png, rows);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (want_gray16) {
    if (color != PNG_COLOR_TYPE_GRAY) png_error(png, "label map must be single-channel gray");
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  } else {
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  out->channels = png_get_channels(png, info);
  const png_size_t rowbytes = png_get_rowbytes(png, info);
  out->bytes.resize(rowbytes * out->height);
  rows = static_cast<png_bytepp>(png_malloc(png, sizeof(png_bytep) * out->height));
  for (png_uint_32 y = 0; y < out->height; ++y) rows[y] = out->bytes.data() + y * rowbytes;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  png_free(png, rows);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool png_write_raw(std::FILE* fp, const png_byte* data, png_uint_32 width, png_uint_32 height,
                          int bit_depth, int color_type, png_size_t rowbytes) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  for (png_uint_32 y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + y * rowbytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

inline std::unique_ptr<std::FILE, FileCloser> open_file(const std::filesystem::path& path, const char* mode) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError(path.string(), std::string("cannot open (") + mode + ")");
  return f;
}

}  // namespace detail

/// Reads a single-channel label map (8- or 16-bit gray) as an InstanceMask.
/// Labels are taken verbatim; call label_components to make them dense.
inline InstanceMask read_label_png(const std::filesystem::path& path) {
  auto f = detail::open_file(path, "rb");
  detail::PngRawImage raw;
  if (!detail::png_read_raw(f.get(), &raw, true)) throw IoError(path.string(), "unreadable label-map PNG");
  std::vector<std::uint16_t> labels(static_cast<std::size_t>(raw.width) * raw.height);
  if (raw.bit_depth == 16) {
    std::memcpy(labels.data(), raw.bytes.data(), labels.size() * 2);
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = raw.bytes[i];
  }
  return InstanceMask(static_cast<int>(raw.width), static_cast<int>(raw.height), std::move(labels));
}

inline void write_label_png(const std::filesystem::path& path, const InstanceMask& mask) {
  auto f = detail::open_file(path, "wb");
  const auto labels = mask.labels();
  if (!detail::png_write_raw(f.get(), reinterpret_cast<const png_byte*>(labels.data()),
                             static_cast<png_uint_32>(mask.width()), static_cast<png_uint_32>(mask.height()), 16,
                             PNG_COLOR_TYPE_GRAY, static_cast<png_size_t>(mask.width()) * 2)) {
    throw IoError(path.string(), "PNG encoding failed");
  }
}

/// Reads any PNG as 8-bit RGB (alpha dropped, gray expanded).
inline RgbImage read_rgb_png(const std::filesystem::path& path) {
  auto f = detail::open_file(path, "rb");
  detail::PngRawImage raw;
  if (!detail::png_read_raw(f.get(), &raw, false) || raw.channels != 3) {
    throw IoError(path.string(), "unreadable RGB PNG");
  }
  return RgbImage{static_cast<int>(raw.width), static_cast<int>(raw.height), std::move(raw.bytes)};
}

inline void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
  auto f = detail::open_file(path, "wb");
  if (!detail::png_write_raw(f.get(), image.pixels.data(), static_cast<png_uint_32>(image.width),
                             static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
                             static_cast<png_size_t>(image.width) * 3)) {
    throw IoError(path.string(), "PNG encoding failed");
  }
}

}  // namespace aphid

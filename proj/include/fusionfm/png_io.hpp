#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"

namespace fusionfm {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; the message is parked here first.
struct PngErrorSlot {
  std::jmp_buf jump;
  char message[256] = {};
};

[[noreturn]] inline void png_error_handler(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<PngErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof(slot->message), "%s", msg);
  std::longjmp(slot->jump, 1);
}
inline void png_warning_handler(png_structp, png_const_charp) {}

struct PngRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<png_byte> bytes;  // rows back to back, 16-bit samples host-endian
};

// Only trivially destructible state lives between setjmp and the libpng
// calls, so the longjmp never skips a destructor. Returns false on error.
inline bool png_read_raster(std::FILE* fp, PngRaster& out, PngErrorSlot& slot) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &slot, png_error_handler,
                                           png_warning_handler);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(slot.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.depth = png_get_bit_depth(png, info);
  out.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.bytes.resize(rowbytes * static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) png_read_row(png, out.bytes.data() + rowbytes * y, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool png_write_raster(std::FILE* fp, const PngRaster& in, PngErrorSlot& slot) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &slot, png_error_handler,
                                            png_warning_handler);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(slot.jump)) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(in.width), static_cast<png_uint_32>(in.height),
               in.depth, in.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes =
      static_cast<std::size_t>(in.width) * in.channels * static_cast<std::size_t>(in.depth / 8);
  for (int y = 0; y < in.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(in.bytes.data() + rowbytes * y));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace detail

// Loads 8- or 16-bit gray/gray+alpha/RGB/RGBA/palette PNGs. Alpha is dropped;
// intensities are mapped linearly onto [0,1].
[[nodiscard]] inline Image load_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open PNG '" + path.string() + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("'" + path.string() + "' is not a PNG file");
  }
  detail::PngRaster raster;
  detail::PngErrorSlot slot;
  if (!detail::png_read_raster(fp.get(), raster, slot)) {
    throw DataError("'" + path.string() + "': libpng: " + slot.message);
  }
  if (raster.channels != 1 && raster.channels != 3) {
    throw DataError("'" + path.string() + "': unsupported channel count " +
                    std::to_string(raster.channels));
  }

  Image img(raster.height, raster.width, raster.channels);
  const double scale = raster.depth == 16 ? 65535.0 : 255.0;
  auto out = img.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v;
    if (raster.depth == 16) {
      std::uint16_t s;
      std::memcpy(&s, raster.bytes.data() + 2 * i, 2);
      v = s;
    } else {
      v = raster.bytes[i];
    }
    out[i] = v / scale;
  }
  return img;
}

// Writes 1- or 3-channel images with 8 or 16 bits per sample. Values are
// clamped to [0,1] and quantised with round-half-even.
inline void save_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("save_png: bit depth must be 8 or 16");
  if (img.empty()) throw DataError("save_png: empty image for '" + path.string() + "'");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  detail::PngRaster raster{img.width(), img.height(), img.channels(), bit_depth, {}};
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  raster.bytes.resize(img.size() * static_cast<std::size_t>(bit_depth / 8));
  auto in = img.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto q = static_cast<std::uint32_t>(std::nearbyint(std::clamp(in[i], 0.0, 1.0) * scale));
    if (bit_depth == 16) {
      raster.bytes[2 * i] = static_cast<png_byte>(q >> 8);  // PNG stores big-endian
      raster.bytes[2 * i + 1] = static_cast<png_byte>(q & 0xff);
    } else {
      raster.bytes[i] = static_cast<png_byte>(q);
    }
  }

  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write PNG '" + path.string() + "'");
  detail::PngErrorSlot slot;
  if (!detail::png_write_raster(fp.get(), raster, slot)) {
    throw DataError("'" + path.string() + "': libpng: " + slot.message);
  }
}

}  // namespace fusionfm

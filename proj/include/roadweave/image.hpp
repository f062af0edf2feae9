#pragma once

// 8-bit rasters and their PNG / JPEG codecs (libpng, libjpeg).
// PNG encoding writes no time or text chunks, so identical pixels always
// produce identical bytes.

#include <roadweave/errors.hpp>

#include <png.h>
#include <jpeglib.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace roadweave {

/// Interleaved 8-bit raster with 1 (gray) or 3 (RGB) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, 0) {
    if (w < 0 || h < 0 || (c != 1 && c != 3)) throw DomainError("bad image shape");
  }

  std::uint8_t* px(int row, int col) {
    return data.data() + (static_cast<std::size_t>(row) * width + col) * channels;
  }
  const std::uint8_t* px(int row, int col) const {
    return data.data() + (static_cast<std::size_t>(row) * width + col) * channels;
  }
  std::size_t row_bytes() const noexcept { return static_cast<std::size_t>(width) * channels; }

  /// Copy of the rectangle [top, top+h) x [left, left+w).
  Image crop(int top, int left, int w, int h) const {
    if (top < 0 || left < 0 || top + h > height || left + w > width) {
      throw DomainError("crop outside image");
    }
    Image out(w, h, channels);
    for (int i = 0; i < h; ++i) {
      std::memcpy(out.px(i, 0), px(top + i, left), out.row_bytes());
    }
    return out;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

enum class ImageFormat { kUnknown, kPng, kJpeg };

inline ImageFormat sniff_image(std::string_view bytes) noexcept {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0) return ImageFormat::kPng;
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageFormat::kJpeg;
  }
  return ImageFormat::kUnknown;
}

namespace detail {

struct PngReadState {
  std::string_view bytes;
  std::size_t pos = 0;
};

inline void png_read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->bytes.size() - st->pos < n) png_error(png, "truncated PNG");
  std::memcpy(out, st->bytes.data() + st->pos, n);
  st->pos += n;
}

inline void png_write_callback(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_callback(png_structp) {}

inline void png_error_callback(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

inline void png_warning_callback(png_structp, png_const_charp) {}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace detail

/// Decodes a PNG to 8-bit gray or RGB. Palette and low-bit-depth images are
/// expanded, 16-bit samples stripped, alpha dropped.
inline Image decode_png(std::string_view bytes) {
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                           detail::png_error_callback, detail::png_warning_callback);
  if (!png) throw FormatError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  detail::PngReadState state{bytes, 0};
  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png decode failed: " + err);
  }
  png_set_read_fn(png, &state, detail::png_read_callback);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) png_error(png, "unsupported channel layout");
  img = Image(static_cast<int>(png_get_image_width(png, info)),
              static_cast<int>(png_get_image_height(png, info)), channels);
  rows.resize(static_cast<std::size_t>(img.height));
  for (int i = 0; i < img.height; ++i) rows[static_cast<std::size_t>(i)] = img.px(i, 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::string encode_png(const Image& img, int compression_level = 6) {
  std::string out;
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                            detail::png_error_callback, detail::png_warning_callback);
  if (!png) throw FormatError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png encode failed: " + err);
  }
  png_set_write_fn(png, &out, detail::png_write_callback, detail::png_flush_callback);
  png_set_compression_level(png, compression_level);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int i = 0; i < img.height; ++i) {
    rows[static_cast<std::size_t>(i)] = const_cast<png_bytep>(img.px(i, 0));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline Image decode_jpeg(std::string_view bytes) {
  jpeg_decompress_struct cinfo{};
  detail::JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = detail::jpeg_error_exit;
  Image img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(std::string("jpeg decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height),
              cinfo.output_components);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.px(static_cast<int>(cinfo.output_scanline), 0);
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

/// Used by tests and fixture tools to produce lossy tiles.
inline std::string encode_jpeg(const Image& img, int quality = 90) {
  jpeg_compress_struct cinfo{};
  detail::JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = detail::jpeg_error_exit;
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buf);
    throw FormatError(std::string("jpeg encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = img.channels;
  cinfo.in_color_space = img.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(img.px(static_cast<int>(cinfo.next_scanline), 0));
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::string out(reinterpret_cast<const char*>(buf), size);
  jpeg_destroy_compress(&cinfo);
  std::free(buf);
  return out;
}

/// Decodes PNG or JPEG, chosen by magic bytes.
inline Image decode_image(std::string_view bytes) {
  switch (sniff_image(bytes)) {
    case ImageFormat::kPng: return decode_png(bytes);
    case ImageFormat::kJpeg: return decode_jpeg(bytes);
    case ImageFormat::kUnknown: break;
  }
  throw FormatError("unrecognized image payload");
}

/// Replicates a gray image into three channels; RGB passes through.
inline Image to_rgb(Image img) {
  if (img.channels == 3) return img;
  Image out(img.width, img.height, 3);
  for (std::size_t k = 0; k < img.data.size(); ++k) {
    out.data[3 * k] = out.data[3 * k + 1] = out.data[3 * k + 2] = img.data[k];
  }
  return out;
}

}  // namespace roadweave

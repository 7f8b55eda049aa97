#include "nbr/codec.hpp"

// clang-format off
#include <cstdio>
#include <jpeglib.h>
#include <png.h>
// clang-format on

#include <algorithm>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <string>

#include "nbr/error.hpp"

namespace nbr {

namespace {

// ---- PNG ------------------------------------------------------------------

struct PngWriteCtx {
  Bytes* out;
};

void png_write_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* ctx = static_cast<PngWriteCtx*>(png_get_io_ptr(png));
  ctx->out->insert(ctx->out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct PngReadCtx {
  std::span<const unsigned char> data;
  std::size_t pos = 0;
};

void png_read_bytes(png_structp png, png_bytep out, png_size_t len) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + len > ctx->data.size()) png_error(png, "truncated PNG data");
  std::memcpy(out, ctx->data.data() + ctx->pos, len);
  ctx->pos += len;
}

void png_warn_silent(png_structp, png_const_charp) {}

Bytes encode_png_depth(const Image& img, int depth) {
  Bytes out;
  PngWriteCtx ctx{&out};
  const int h = img.height(), w = img.width(), ch = img.channels();
  const std::size_t bpp = depth == 16 ? 2 : 1;
  std::vector<unsigned char> rows(static_cast<std::size_t>(h) * w * ch * bpp);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * ch + c;
        if (depth == 16) {
          const unsigned short v = quantize16(img.at(c, y, x));
          rows[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
          rows[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
        } else {
          rows[i] = quantize8(img.at(c, y, x));
        }
      }

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_silent);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &ctx, png_write_bytes, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               depth, ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(w) * ch * bpp;
  for (int y = 0; y < h; ++y) png_write_row(png, rows.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// ---- JPEG -----------------------------------------------------------------

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

bool is_png(std::span<const unsigned char> d) {
  static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  return d.size() >= 8 && std::equal(sig, sig + 8, d.begin());
}

bool is_jpeg(std::span<const unsigned char> d) {
  return d.size() >= 3 && d[0] == 0xff && d[1] == 0xd8 && d[2] == 0xff;
}

}  // namespace

Bytes encode_png(const Image& img) { return encode_png_depth(img, 8); }
Bytes encode_png16(const Image& img) { return encode_png_depth(img, 16); }

Image decode_png(std::span<const unsigned char> data) {
  if (!is_png(data)) throw FormatError("not a PNG stream");
  PngReadCtx ctx{data, 0};
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_silent);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<unsigned char> buf;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG stream");
  }
  png_set_read_fn(png, &ctx, png_read_bytes);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian order in the buffer
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int out_depth = png_get_bit_depth(png, info);
  const int n = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buf.resize(stride * h);
  row_ptrs.resize(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = buf.data() + y * stride;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const int color_channels = (n >= 3) ? 3 : 1;
  Image img(h, w, color_channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < color_channels; ++c) {
        const std::size_t i = static_cast<std::size_t>(x) * n + c;
        if (out_depth == 16) {
          unsigned short v;
          std::memcpy(&v, row_ptrs[y] + 2 * i, 2);
          img.at(c, y, x) = static_cast<float>(v / 65535.0);
        } else {
          img.at(c, y, x) = static_cast<float>(row_ptrs[y][i] / 255.0);
        }
      }
  return img;
}

Bytes encode_jpeg(const Image& img, int quality) {
  if (quality < 1 || quality > 100)
    throw InvalidParameter("JPEG quality must be in [1,100], got " +
                           std::to_string(quality));
  const int h = img.height(), w = img.width(), ch = img.channels();
  std::vector<unsigned char> rows(static_cast<std::size_t>(h) * w * ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c)
        rows[(static_cast<std::size_t>(y) * w + x) * ch + c] = quantize8(img.at(c, y, x));

  jpeg_compress_struct cinfo{};
  JpegError err{};
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw IoError(std::string("JPEG encoding failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = ch;
  cinfo.in_color_space = ch == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = rows.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * ch;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  Bytes out(mem, mem + mem_size);
  jpeg_destroy_compress(&cinfo);
  std::free(mem);
  return out;
}

Image decode_jpeg(std::span<const unsigned char> data) {
  if (!is_jpeg(data)) throw FormatError("not a JPEG stream");
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  std::vector<unsigned char> rows;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(std::string("corrupt JPEG stream: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  const int ch = cinfo.output_components;
  rows.resize(static_cast<std::size_t>(h) * w * ch);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rows.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * ch;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  Image img(h, w, ch == 3 ? 3 : 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c)
        img.at(c, y, x) = static_cast<float>(
            rows[(static_cast<std::size_t>(y) * w + x) * ch + c] / 255.0);
  return img;
}

Image decode_image(std::span<const unsigned char> data) {
  if (is_png(data)) return decode_png(data);
  if (is_jpeg(data)) return decode_jpeg(data);
  throw FormatError("unrecognized image format (expected PNG or JPEG)");
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const unsigned char> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

Image read_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_image(const std::filesystem::path& path, const Image& img) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".png")
    write_file_atomic(path, encode_png(img));
  else if (ext == ".jpg" || ext == ".jpeg")
    write_file_atomic(path, encode_jpeg(img, 95));
  else
    throw InvalidParameter("unsupported image extension '" + ext + "' for " +
                           path.string());
}

}  // namespace nbr

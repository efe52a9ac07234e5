#include "swisenet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

// jpeglib.h needs size_t and FILE declared first.
#include <jpeglib.h>

#include "swisenet/error.hpp"

namespace swisenet {

namespace fs = std::filesystem;

namespace {

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

RawImage to_rgb(int h, int w, int c, const std::vector<std::uint8_t>& px) {
  RawImage out(h, w, 3);
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  for (std::size_t i = 0; i < n; ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      const int src = c >= 3 ? ch : 0;
      out.pixels[i * 3 + static_cast<std::size_t>(ch)] = px[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(src)];
    }
  }
  return out;
}

// ----------------------------------------------------------------- JPEG

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

void jpeg_silence(j_common_ptr, int) {}

struct JpegResult {
  bool ok = false;
  std::string error;
  int h = 0, w = 0, c = 0;
};

// No C++ objects with destructors live inside the setjmp frame.
JpegResult jpeg_decode(std::span<const std::uint8_t> bytes, bool header_only, std::vector<std::uint8_t>* out) {
  JpegResult res;
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_silence;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    res.error = err.message;
    return res;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, const_cast<unsigned char*>(bytes.data()), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  res.h = static_cast<int>(cinfo.image_height);
  res.w = static_cast<int>(cinfo.image_width);
  res.c = cinfo.num_components;
  if (!header_only) {
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    res.c = cinfo.output_components;
    const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * static_cast<std::size_t>(res.c);
    out->resize(stride * cinfo.output_height);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = out->data() + stride * cinfo.output_scanline;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  res.ok = true;
  return res;
}

// ----------------------------------------------------------------- PNG

struct PngReader {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_mem(png_structp png, png_bytep dst, png_size_t n) {
  auto* r = static_cast<PngReader*>(png_get_io_ptr(png));
  if (r->offset + n > r->bytes.size()) png_error(png, "truncated PNG data");
  std::memcpy(dst, r->bytes.data() + r->offset, n);
  r->offset += n;
}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<char*>(png_get_error_ptr(png));
  std::snprintf(buf, 256, "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct PngResult {
  bool ok = false;
  int h = 0, w = 0, c = 0;
};

PngResult png_decode(std::span<const std::uint8_t> bytes, bool header_only, std::vector<std::uint8_t>* out,
                     char* errbuf) {
  PngResult res;
  PngReader reader{bytes, 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, errbuf, png_error_fn, png_warning_fn);
  if (!png) return res;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return res;
  }
  std::vector<png_bytep>* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete rows;
    png_destroy_read_struct(&png, &info, nullptr);
    return res;
  }
  png_set_read_fn(png, &reader, png_read_mem);
  png_read_info(png, info);
  res.w = static_cast<int>(png_get_image_width(png, info));
  res.h = static_cast<int>(png_get_image_height(png, info));
  if (!header_only) {
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    res.c = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out->resize(stride * static_cast<std::size_t>(res.h));
    rows = new std::vector<png_bytep>(static_cast<std::size_t>(res.h));
    for (int y = 0; y < res.h; ++y) (*rows)[static_cast<std::size_t>(y)] = out->data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows->data());
    png_read_end(png, nullptr);
    delete rows;
    rows = nullptr;
  } else {
    res.c = png_get_channels(png, info);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  res.ok = true;
  return res;
}

}  // namespace

bool has_image_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

RawImage decode_image(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> px;
  if (is_jpeg(bytes)) {
    auto r = jpeg_decode(bytes, false, &px);
    if (!r.ok) throw DataError("JPEG decode failed: " + r.error);
    if (r.h <= 0 || r.w <= 0) throw DataError("JPEG has empty dimensions");
    return to_rgb(r.h, r.w, r.c, px);
  }
  if (is_png(bytes)) {
    char err[256] = "malformed PNG";
    auto r = png_decode(bytes, false, &px, err);
    if (!r.ok) throw DataError(std::string("PNG decode failed: ") + err);
    if (r.h <= 0 || r.w <= 0) throw DataError("PNG has empty dimensions");
    return to_rgb(r.h, r.w, r.c, px);
  }
  throw DataError("unrecognized image format (expected JPEG or PNG)");
}

RawImage decode_image(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(std::span<const std::uint8_t>(bytes));
  } catch (const DataError& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

ImageInfo probe_image(const fs::path& path) {
  const auto bytes = read_file(path);
  std::span<const std::uint8_t> b(bytes);
  if (is_jpeg(b)) {
    auto r = jpeg_decode(b, true, nullptr);
    if (!r.ok) throw DataError("'" + path.string() + "': JPEG header invalid: " + r.error);
    return {r.h, r.w, r.c};
  }
  if (is_png(b)) {
    char err[256] = "malformed PNG";
    auto r = png_decode(b, true, nullptr, err);
    if (!r.ok) throw DataError("'" + path.string() + "': PNG header invalid: " + err);
    return {r.h, r.w, r.c};
  }
  throw DataError("'" + path.string() + "': unrecognized image format");
}

void write_png(const fs::path& path, const RawImage& image) {
  if (image.channels != 1 && image.channels != 3) throw ArgumentError("write_png supports 1 or 3 channels");
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw DataError("cannot write '" + path.string() + "'");
  char err[256] = "PNG encode failed";
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("'" + path.string() + "': " + err);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.channels);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + stride * static_cast<std::size_t>(y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void write_jpeg(const fs::path& path, const RawImage& image, int quality) {
  if (image.channels != 3) throw ArgumentError("write_jpeg expects 3 channels");
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw DataError("cannot write '" + path.string() + "'");
  jpeg_compress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(fp);
    throw DataError("'" + path.string() + "': JPEG encode failed");
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, fp);
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(image.pixels.data() + stride * cinfo.next_scanline);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(fp);
}

}  // namespace swisenet

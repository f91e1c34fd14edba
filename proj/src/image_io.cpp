#include "segsr/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "segsr/errors.hpp"

namespace segsr {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png(const std::string& path, int w, int h, int channels,
               const std::vector<uint8_t>& rows_interleaved) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail_runtime("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail_runtime("libpng allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_runtime("libpng write failure: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(rows_interleaved.data() + size_t(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

void read_png(const std::string& path, int& w, int& h, int& channels, std::vector<uint8_t>& out) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail_validation("cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_runtime("libpng allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_validation("not a readable PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);
  w = int(png_get_image_width(png, info));
  h = int(png_get_image_height(png, info));
  channels = int(png_get_channels(png, info));
  out.resize(size_t(w) * h * channels);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[size_t(y)] = out.data() + size_t(y) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png_rgb8(const std::string& path, const TensorF& img01) {
  require(img01.shape.size() == 3 && img01.shape[0] == 3, "write_png_rgb8 expects [3,H,W]");
  const int h = img01.shape[1], w = img01.shape[2];
  const int64_t hw = int64_t(h) * w;
  std::vector<uint8_t> buf(size_t(hw) * 3);
  for (int64_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) buf[size_t(p) * 3 + c] = to_u8(img01.v[size_t(c) * hw + p]);
  write_png(path, w, h, 3, buf);
}

void write_png_gray8(const std::string& path, const IntField& field) {
  std::vector<uint8_t> buf(static_cast<size_t>(field.numel()));
  for (int64_t i = 0; i < field.numel(); ++i) {
    const int32_t v = field.v[size_t(i)];
    require(v >= 0 && v <= 255, "gray PNG value out of the 8-bit range");
    buf[size_t(i)] = uint8_t(v);
  }
  write_png(path, field.w, field.h, 1, buf);
}

TensorF read_png_rgb(const std::string& path) {
  int w, h, ch;
  std::vector<uint8_t> buf;
  read_png(path, w, h, ch, buf);
  require(ch == 3 || ch == 1, path + ": expected RGB or gray PNG");
  TensorF out({3, h, w});
  const int64_t hw = int64_t(h) * w;
  for (int64_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c)
      out.v[size_t(c) * hw + p] = float(buf[size_t(p) * ch + (ch == 3 ? c : 0)]) / 255.0f;
  return out;
}

IntField read_png_gray(const std::string& path) {
  int w, h, ch;
  std::vector<uint8_t> buf;
  read_png(path, w, h, ch, buf);
  require(ch == 1, path + ": expected a single-channel PNG mask");
  IntField out(h, w);
  for (int64_t i = 0; i < out.numel(); ++i) out.v[size_t(i)] = buf[size_t(i)];
  return out;
}

}  // namespace segsr

#include "adatrack/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "adatrack/errors.hpp"

namespace adatrack {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw InputError("cannot open " + path.string());
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), f.get()) != sig.size() || png_sig_cmp(sig.data(), 0, sig.size()) != 0) {
    throw InputError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp& p;
    png_infop& i;
    ~Guard() { png_destroy_read_struct(&p, &i, nullptr); }
  } guard{png, info};
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  int w = 0, h = 0, ch = 0;
  // libpng reports errors by longjmp; only C frames lie between here and there.
  if (setjmp(png_jmpbuf(png))) throw InputError("corrupt PNG: " + path.string());

  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  ch = png_get_channels(png, info);
  if (ch != 1 && ch != 3) throw InputError("unsupported PNG channel layout: " + path.string());
  buf.resize(static_cast<std::size_t>(w) * h * ch);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  Image img(w, h, ch);
  for (std::size_t k = 0; k < buf.size(); ++k) img.data()[k] = buf[k] / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) throw InputError("PNG output needs 1 or 3 channels");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw InputError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp& p;
    png_infop& i;
    ~Guard() { png_destroy_write_struct(&p, &i); }
  } guard{png, info};
  const int rowlen = img.width() * img.channels();
  std::vector<unsigned char> row(rowlen);
  if (setjmp(png_jmpbuf(png))) throw InputError("failed writing " + path.string());

  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto src = img.data();
  for (int y = 0; y < img.height(); ++y) {
    for (int k = 0; k < rowlen; ++k) {
      const float v = std::clamp(src[static_cast<std::size_t>(y) * rowlen + k], 0.0f, 1.0f);
      row[k] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os.write("ADFL", 4);
  put_u32(os, static_cast<std::uint32_t>(flow.width()));
  put_u32(os, static_cast<std::uint32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      put_f32(os, flow.at(x, y).u);
      put_f32(os, flow.at(x, y).v);
    }
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) os.put(flow.valid(x, y) ? 1 : 0);
  if (!os) throw InputError("failed writing " + path.string());
}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || std::memcmp(magic.data(), "ADFL", 4) != 0) throw InputError("not a flow dump: " + path.string());
  const std::uint32_t w = get_u32(is), h = get_u32(is);
  if (!is || w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw InputError("bad flow dimensions");
  FlowField f(static_cast<int>(w), static_cast<int>(h));
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      const float u = get_f32(is);
      const float v = get_f32(is);
      f.at(x, y) = {u, v};
    }
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) f.set_valid(x, y, is.get() != 0);
  if (!is) throw InputError("truncated flow dump: " + path.string());
  return f;
}

}  // namespace adatrack

#include "evsurf/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace evsurf {

namespace {

void put_u32_be(std::string& out, std::uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::string& payload) {
  std::string head;
  put_u32_be(head, static_cast<std::uint32_t>(payload.size()));
  f.write(head.data(), 4);
  f.write(type, 4);
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size()));
  std::string tail;
  put_u32_be(tail, static_cast<std::uint32_t>(crc));
  f.write(tail.data(), 4);
}

std::uint8_t quantise(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_png(const std::string& path, const Image3& img) {
  require(img.width > 0 && img.height > 0, "write_png: empty image");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot open for writing: " + path);

  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::string ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // colour type: truecolour
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  write_chunk(f, "IHDR", ihdr);

  // Raw scanlines, filter byte 0 per row.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (1 + 3 * img.width));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    for (int x = 0; x < img.width; ++x) {
      raw.push_back(quantise(img.at(x, y, 0)));
      raw.push_back(quantise(img.at(x, y, 1)));
      raw.push_back(quantise(img.at(x, y, 2)));
    }
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string idat(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(idat.data()), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw RuntimeFailure("png deflate failed");
  }
  idat.resize(bound);
  write_chunk(f, "IDAT", idat);
  write_chunk(f, "IEND", "");
  if (!f) throw RuntimeFailure("write failed: " + path);
}

namespace {

template <typename Img>
void write_grid(const std::string& path, const Img& img, int channels) {
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot open for writing: " + path);
  f << img.width << " " << img.height << " " << channels << "\n";
  char buf[32];
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width * channels; ++x) {
      std::snprintf(buf, sizeof(buf), "%.17g", img.data[static_cast<std::size_t>(y) * img.width * channels + x]);
      f << buf << (x + 1 == img.width * channels ? "\n" : " ");
    }
  }
  if (!f) throw RuntimeFailure("write failed: " + path);
}

void read_grid_header(std::ifstream& f, const std::string& path, int& w, int& h, int& c) {
  if (!f) throw RuntimeFailure("cannot open: " + path);
  if (!(f >> w >> h >> c) || w <= 0 || h <= 0) {
    throw RuntimeFailure("malformed float grid header: " + path);
  }
}

}  // namespace

void write_float_grid(const std::string& path, const Image3& img) {
  write_grid(path, img, 3);
}

void write_float_grid(const std::string& path, const Image1& img) {
  write_grid(path, img, 1);
}

Image3 read_float_grid3(const std::string& path) {
  std::ifstream f(path);
  int w, h, c;
  read_grid_header(f, path, w, h, c);
  if (c != 3) throw RuntimeFailure("expected 3-channel grid: " + path);
  Image3 img(w, h);
  for (auto& v : img.data) {
    if (!(f >> v)) throw RuntimeFailure("truncated float grid: " + path);
  }
  return img;
}

Image1 read_float_grid1(const std::string& path) {
  std::ifstream f(path);
  int w, h, c;
  read_grid_header(f, path, w, h, c);
  if (c != 1) throw RuntimeFailure("expected 1-channel grid: " + path);
  Image1 img(w, h);
  for (auto& v : img.data) {
    if (!(f >> v)) throw RuntimeFailure("truncated float grid: " + path);
  }
  return img;
}

}  // namespace evsurf

#include "mopd/pnm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace mopd {
namespace {

void write_header(std::ofstream& f, const char* magic, int w, int h, int maxval) {
  f << magic << "\n" << w << " " << h << "\n" << maxval << "\n";
}

struct PnmHeader {
  std::string magic;
  int w = 0, h = 0, maxval = 0;
};

PnmHeader read_header(std::ifstream& f, const std::string& path) {
  PnmHeader hd;
  f >> hd.magic;
  auto next_int = [&](int& out) {
    // PNM allows '#' comments between header tokens.
    f >> std::ws;
    while (f.peek() == '#') {
      std::string line;
      std::getline(f, line);
      f >> std::ws;
    }
    if (!(f >> out)) throw Error(Err::io, "bad PNM header in " + path);
  };
  next_int(hd.w);
  next_int(hd.h);
  next_int(hd.maxval);
  f.get();  // single whitespace before the raster
  if (hd.w <= 0 || hd.h <= 0) throw Error(Err::io, "bad PNM dimensions in " + path);
  return hd;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Err::io, "cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Err::io, "cannot open for reading: " + path);
  return f;
}

}  // namespace

void write_ppm(const std::string& path, const RgbImage& img) {
  if (img.c != 3) throw Error(Err::invalid_input, "write_ppm expects 3 channels");
  auto f = open_out(path);
  write_header(f, "P6", img.w, img.h, 255);
  f.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
  if (!f) throw Error(Err::io, "short write: " + path);
}

RgbImage read_ppm(const std::string& path) {
  auto f = open_in(path);
  auto hd = read_header(f, path);
  if (hd.magic != "P6" || hd.maxval != 255) throw Error(Err::io, "not an 8-bit P6 file: " + path);
  RgbImage img(hd.h, hd.w, 3);
  f.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (!f) throw Error(Err::io, "short read: " + path);
  return img;
}

namespace {

template <class ImgT>
void write_pnm16(const std::string& path, const ImgT& img, const char* magic, int channels) {
  if (img.c != channels) throw Error(Err::invalid_input, "unexpected channel count for " + path);
  auto f = open_out(path);
  write_header(f, magic, img.w, img.h, 65535);
  std::vector<uint8_t> buf(img.data.size() * 2);
  for (size_t i = 0; i < img.data.size(); ++i) {
    buf[2 * i] = uint8_t(img.data[i] >> 8);
    buf[2 * i + 1] = uint8_t(img.data[i] & 0xff);
  }
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!f) throw Error(Err::io, "short write: " + path);
}

Image<uint16_t> read_pnm16(const std::string& path, const char* magic, int channels) {
  auto f = open_in(path);
  auto hd = read_header(f, path);
  if (hd.magic != magic || hd.maxval != 65535) throw Error(Err::io, "not a 16-bit PNM file: " + path);
  Image<uint16_t> img(hd.h, hd.w, channels);
  std::vector<uint8_t> buf(img.data.size() * 2);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!f) throw Error(Err::io, "short read: " + path);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = uint16_t((uint16_t(buf[2 * i]) << 8) | buf[2 * i + 1]);
  return img;
}

}  // namespace

void write_pgm16(const std::string& path, const Image<uint16_t>& img) {
  write_pnm16(path, img, "P5", 1);
}

Image<uint16_t> read_pgm16(const std::string& path) { return read_pnm16(path, "P5", 1); }

void write_ppm16(const std::string& path, const Image<uint16_t>& img) {
  write_pnm16(path, img, "P6", 3);
}

Image<uint16_t> read_ppm16(const std::string& path) { return read_pnm16(path, "P6", 3); }

uint16_t quantize_snorm16(float v) {
  float clamped = std::clamp(v, -1.0f, 1.0f);
  return uint16_t(std::lround((clamped + 1.0f) * 0.5f * 65535.0f));
}

float dequantize_snorm16(uint16_t q) { return float(q) / 65535.0f * 2.0f - 1.0f; }

}  // namespace mopd

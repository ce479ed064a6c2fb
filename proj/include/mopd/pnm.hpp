#pragma once

#include "mopd/core.hpp"

#include <string>

namespace mopd {

// Lossless PNM rasters. 8-bit RGB uses P6 maxval 255; 16-bit payloads use
// P6/P5 maxval 65535 with big-endian samples per the format.

void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

void write_pgm16(const std::string& path, const Image<uint16_t>& img);
Image<uint16_t> read_pgm16(const std::string& path);

void write_ppm16(const std::string& path, const Image<uint16_t>& img);  // c == 3
Image<uint16_t> read_ppm16(const std::string& path);

// [-1,1] <-> uint16 channel scaling used for normal maps.
uint16_t quantize_snorm16(float v);
float dequantize_snorm16(uint16_t q);

}  // namespace mopd

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atelier/data/synth.hpp"

namespace atelier::synth {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Binary PPM (P6, maxval 255). Values are rounded to bytes on write and read
// back as byte/255.0, so byte-quantized images round-trip bit-exactly.
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

// Binary PGM (P5) with caller-chosen maxval: 8 for part masks, 1 for binary
// sketches, 255 for heatmaps.
void write_pgm(const std::string& path, const std::vector<uint8_t>& values, int h, int w,
               int maxval);
std::vector<uint8_t> read_pgm(const std::string& path, int* h, int* w, int* maxval);

}  // namespace atelier::synth

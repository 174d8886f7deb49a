#include "atelier/data/pnm.hpp"

#include <cmath>
#include <fstream>

namespace atelier::synth {

namespace {

uint8_t to_byte(double v) {
  const double scaled = std::lround(v * 255.0);
  return static_cast<uint8_t>(scaled < 0 ? 0 : (scaled > 255 ? 255 : scaled));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError(path + ": truncated header");
  return tok;
}

int parse_int(const std::string& tok, const std::string& path) {
  try {
    return std::stoi(tok);
  } catch (...) {
    throw IoError(path + ": bad header token '" + tok + "'");
  }
}

}  // namespace

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P6\n" << image.w << " " << image.h << "\n255\n";
  std::vector<uint8_t> bytes(static_cast<size_t>(image.h) * image.w * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image.px[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path + ": write failed");
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  if (next_token(in, path) != "P6") throw IoError(path + ": not a binary PPM (P6)");
  const int w = parse_int(next_token(in, path), path);
  const int h = parse_int(next_token(in, path), path);
  const int maxval = parse_int(next_token(in, path), path);
  if (maxval != 255) throw IoError(path + ": expected maxval 255");
  if (w <= 0 || h <= 0) throw IoError(path + ": bad dimensions");
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError(path + ": truncated pixel data");
  Image img(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) img.px[i] = bytes[i] / 255.0;
  return img;
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& values, int h, int w,
               int maxval) {
  if (static_cast<size_t>(h) * w != values.size())
    throw IoError(path + ": value count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P5\n" << w << " " << h << "\n" << maxval << "\n";
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
  if (!out) throw IoError(path + ": write failed");
}

std::vector<uint8_t> read_pgm(const std::string& path, int* h, int* w, int* maxval) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  if (next_token(in, path) != "P5") throw IoError(path + ": not a binary PGM (P5)");
  const int ww = parse_int(next_token(in, path), path);
  const int hh = parse_int(next_token(in, path), path);
  const int mv = parse_int(next_token(in, path), path);
  if (ww <= 0 || hh <= 0 || mv <= 0 || mv > 255) throw IoError(path + ": bad header");
  std::vector<uint8_t> bytes(static_cast<size_t>(hh) * ww);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError(path + ": truncated pixel data");
  for (uint8_t b : bytes)
    if (b > mv) throw IoError(path + ": pixel value exceeds maxval");
  if (h) *h = hh;
  if (w) *w = ww;
  if (maxval) *maxval = mv;
  return bytes;
}

}  // namespace atelier::synth

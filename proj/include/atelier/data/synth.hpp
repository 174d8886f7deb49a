#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace atelier::synth {

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Label 0 is background in masks; the remaining 8 are garment parts.
enum class PartLabel : uint8_t {
  background = 0,
  body = 1,
  sleeves = 2,
  collar = 3,
  pocket = 4,
  buttons = 5,
  zip = 6,
  belt = 7,
  stripes = 8,
};
constexpr int kPartCount = 8;
constexpr int kMaskClasses = 9;  // 8 parts + background

enum class GarmentClass : uint8_t { shirt = 0, dress = 1, jacket = 2, pants = 3 };

// The six parts a spec may or may not include; body (and sleeves, for
// non-pants classes) are implied by the garment class.
constexpr std::array<PartLabel, 6> kOptionalParts = {
    PartLabel::pocket, PartLabel::buttons, PartLabel::zip,
    PartLabel::belt,   PartLabel::stripes, PartLabel::collar,
};

struct Color {
  uint8_t r, g, b;
};
constexpr int kPaletteSize = 8;
const std::array<Color, kPaletteSize>& palette();
const std::array<std::string, kPaletteSize>& color_names();
Color background_color();

const std::string& part_name(PartLabel p);
const std::string& class_name(GarmentClass c);
PartLabel part_from_name(const std::string& name);  // throws DataError on unknown

// RGB image with values in [0,1], byte-quantized (every value is k/255).
struct Image {
  int h = 0, w = 0;
  std::vector<double> px;  // h*w*3 row-major

  Image() = default;
  Image(int hh, int ww) : h(hh), w(ww), px(static_cast<size_t>(hh) * ww * 3, 0.0) {}
  double& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  double at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

struct MaskImage {
  int h = 0, w = 0;
  std::vector<uint8_t> labels;  // values 0..8

  MaskImage() = default;
  MaskImage(int hh, int ww) : h(hh), w(ww), labels(static_cast<size_t>(hh) * ww, 0) {}
  uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * w + x]; }
};

struct BinaryImage {
  int h = 0, w = 0;
  std::vector<uint8_t> v;  // 0 or 1

  BinaryImage() = default;
  BinaryImage(int hh, int ww) : h(hh), w(ww), v(static_cast<size_t>(hh) * ww, 0) {}
  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

constexpr int kCanvas = 32;  // rendered garments are 32x32

struct GarmentSpec {
  uint64_t seed = 0;
  int base_color = 0;  // palette index
  GarmentClass garment = GarmentClass::shirt;
  std::vector<PartLabel> parts;  // sorted by label value
  std::array<int, kPartCount + 1> part_color{};  // palette index per label value

  bool has(PartLabel p) const;
};

// Deterministic function of the seed. Part count is 2/3/4 with probability
// 1/4, 1/2, 1/4, so each optional part appears with marginal probability 1/2.
GarmentSpec sample_spec(uint64_t seed);

// Flat-fill renderer over fixed per-class layouts; later parts overwrite
// earlier ones in both image and mask. Byte-deterministic per spec.
void render(const GarmentSpec& spec, Image& image, MaskImage& mask);

// "a {color} {class}" or "a {color} {class} with {parts...}", parts in an
// order shuffled by the spec seed. Closed vocabulary.
std::vector<std::string> compose_caption(const GarmentSpec& spec);

struct CaptionInfo {
  int base_color = -1;
  GarmentClass garment = GarmentClass::shirt;
  std::set<PartLabel> parts;  // optional parts only
};
// Inverse of the caption grammar; throws DataError on malformed captions.
CaptionInfo parse_caption(const std::vector<std::string>& words);

// Full part set a caption implies: body, class sleeves, and optional parts.
std::set<PartLabel> expected_parts(const CaptionInfo& info);

// In-place crop: an (h/2)x(w/2) window kept on a zero canvas; the validity
// mask marks the window. Window offset is uniform over all legal positions.
void partial_crop(const Image& image, uint64_t seed, Image& partial, BinaryImage& valid);
void partial_crop_at(const Image& image, int oy, int ox, Image& partial, BinaryImage& valid);

// Rule-based inverse of render: silhouette -> class, safe probe cells -> base
// color, per-part probe regions -> optional parts. Exact on rendered samples,
// majority-vote thresholds give robustness to sparse pixel noise.
std::set<PartLabel> detect_parts(const Image& image);

// All caption words plus specials; used to build the text vocabulary.
std::vector<std::string> grammar_words();

}  // namespace atelier::synth

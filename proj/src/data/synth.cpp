#include "atelier/data/synth.hpp"

#include <algorithm>
#include <cmath>

#include "atelier/core/rng.hpp"

namespace atelier::synth {

namespace {

constexpr uint64_t kSpecTag = 0xA7E11E50;
constexpr uint64_t kCaptionTag = 0xCA9710;
constexpr double kColorTol = 0.08;  // mean absolute channel difference

// Inclusive pixel rectangle.
struct Rect {
  int r0, r1, c0, c1;
};

struct ClassLayout {
  std::vector<Rect> body;
  std::vector<Rect> sleeves;
  Rect collar;
  std::vector<Rect> button_dots;
  Rect zip;
  Rect pocket;
  Rect belt;
};

// All layouts are chosen so that every part keeps >= 4 unoccluded pixels under
// any co-occurrence, and so that each part has a probe region the detector can
// read without interference from the other parts. Stripe bands recolor
// body-labeled pixels at fixed rows.
const std::array<int, 8> kStripeRows = {10, 11, 14, 15, 18, 19, 22, 23};

const ClassLayout& layout(GarmentClass g) {
  static const ClassLayout shirt = {
      {{8, 25, 10, 21}},                            // torso
      {{8, 15, 4, 9}, {8, 15, 22, 27}},             // sleeves
      {5, 7, 12, 19},                               // collar
      {{12, 13, 12, 13}, {16, 17, 12, 13}, {20, 21, 12, 13}},
      {9, 24, 15, 16},                              // zip
      {19, 22, 18, 21},                             // pocket
      {23, 24, 10, 21},                             // belt
  };
  static const ClassLayout dress = {
      {{6, 14, 11, 20}, {15, 27, 8, 23}},           // bodice + skirt
      {{6, 11, 5, 10}, {6, 11, 21, 26}},
      {3, 5, 13, 18},
      {{8, 9, 13, 14}, {12, 13, 13, 14}},
      {7, 26, 15, 16},
      {20, 23, 18, 21},
      {16, 17, 9, 22},
  };
  static const ClassLayout jacket = {
      {{7, 26, 9, 22}},
      {{7, 18, 3, 8}, {7, 18, 23, 28}},
      {4, 6, 12, 19},
      {{12, 13, 12, 13}, {16, 17, 12, 13}, {20, 21, 12, 13}},
      {8, 25, 15, 16},
      {19, 22, 17, 20},
      {23, 24, 9, 22},
  };
  static const ClassLayout pants = {
      {{6, 8, 10, 21}, {9, 27, 10, 14}, {9, 27, 17, 21}},  // waistband + legs
      {},                                                  // no sleeves
      {4, 5, 13, 18},
      {{20, 21, 17, 18}},
      {10, 15, 12, 13},
      {13, 16, 17, 20},
      {7, 8, 10, 21},
  };
  switch (g) {
    case GarmentClass::shirt: return shirt;
    case GarmentClass::dress: return dress;
    case GarmentClass::jacket: return jacket;
    case GarmentClass::pants: return pants;
  }
  throw DataError("unknown garment class");
}

void draw_rect(Image& img, MaskImage& mask, const Rect& r, const Color& col, PartLabel lab) {
  for (int y = r.r0; y <= r.r1; ++y)
    for (int x = r.c0; x <= r.c1; ++x) {
      img.at(y, x, 0) = col.r / 255.0;
      img.at(y, x, 1) = col.g / 255.0;
      img.at(y, x, 2) = col.b / 255.0;
      mask.at(y, x) = static_cast<uint8_t>(lab);
    }
}

bool pixel_is(const Image& img, int y, int x, const Color& col, double tol = kColorTol) {
  const double d = std::abs(img.at(y, x, 0) - col.r / 255.0) +
                   std::abs(img.at(y, x, 1) - col.g / 255.0) +
                   std::abs(img.at(y, x, 2) - col.b / 255.0);
  return d / 3.0 <= tol;
}

int match_palette(const Image& img, int y, int x) {
  for (int i = 0; i < kPaletteSize; ++i)
    if (pixel_is(img, y, x, palette()[static_cast<size_t>(i)])) return i;
  return -1;
}

bool occupied(const Image& img, int y, int x) {
  return !pixel_is(img, y, x, background_color(), 0.10);
}

using Cells = std::vector<std::pair<int, int>>;  // (row, col)

Cells rect_cells(const Rect& r) {
  Cells cells;
  for (int y = r.r0; y <= r.r1; ++y)
    for (int x = r.c0; x <= r.c1; ++x) cells.emplace_back(y, x);
  return cells;
}

Cells cross_cells(const std::vector<int>& rows, const std::vector<int>& cols) {
  Cells cells;
  for (int y : rows)
    for (int x : cols) cells.emplace_back(y, x);
  return cells;
}

// Palette index matched by more than `need` of the cells, or -1.
int dominant_color(const Image& img, const Cells& cells, int need) {
  std::array<int, kPaletteSize> counts{};
  for (const auto& [y, x] : cells) {
    const int m = match_palette(img, y, x);
    if (m >= 0) counts[static_cast<size_t>(m)]++;
  }
  int best = -1, bc = 0;
  for (int i = 0; i < kPaletteSize; ++i)
    if (counts[static_cast<size_t>(i)] > bc) {
      bc = counts[static_cast<size_t>(i)];
      best = i;
    }
  return bc >= need ? best : -1;
}

int count_color(const Image& img, const Cells& cells, int palette_idx) {
  int n = 0;
  for (const auto& [y, x] : cells)
    if (match_palette(img, y, x) == palette_idx) ++n;
  return n;
}

int count_occupied(const Image& img, const Cells& cells) {
  int n = 0;
  for (const auto& [y, x] : cells)
    if (occupied(img, y, x)) ++n;
  return n;
}

// Probe cells the detector reads per part; all chosen off the stripe bands
// and clear of every other part for that class.
Cells probe_cells(GarmentClass g, PartLabel part) {
  switch (part) {
    case PartLabel::collar:
      switch (g) {
        case GarmentClass::shirt: return rect_cells({5, 6, 13, 18});
        case GarmentClass::dress: return rect_cells({3, 4, 14, 17});
        case GarmentClass::jacket: return rect_cells({4, 5, 13, 18});
        case GarmentClass::pants: return rect_cells({4, 5, 14, 17});
      }
      break;
    case PartLabel::buttons:
      switch (g) {
        case GarmentClass::shirt:
        case GarmentClass::jacket: return cross_cells({12, 13, 16, 17, 20, 21}, {12, 13});
        case GarmentClass::dress: return cross_cells({8, 9, 12, 13}, {13, 14});
        case GarmentClass::pants: return cross_cells({20, 21}, {17, 18});
      }
      break;
    case PartLabel::zip:
      switch (g) {
        case GarmentClass::shirt:
        case GarmentClass::jacket: return cross_cells({12, 13, 16, 17, 20, 21}, {15, 16});
        case GarmentClass::dress: return cross_cells({12, 13, 20, 21}, {15, 16});
        case GarmentClass::pants: return cross_cells({12, 13}, {12, 13});
      }
      break;
    case PartLabel::pocket:
      switch (g) {
        case GarmentClass::shirt: return rect_cells({20, 21, 19, 20});
        case GarmentClass::dress: return rect_cells({21, 22, 19, 20});
        case GarmentClass::jacket: return rect_cells({20, 21, 18, 19});
        case GarmentClass::pants: return cross_cells({13, 16}, {18, 19});
      }
      break;
    case PartLabel::belt:
      switch (g) {
        case GarmentClass::shirt: return cross_cells({24}, {10, 11, 14, 17});
        case GarmentClass::dress: return cross_cells({16, 17}, {9, 10});
        case GarmentClass::jacket: return cross_cells({24}, {10, 11, 14, 21});
        case GarmentClass::pants: return cross_cells({7, 8}, {10, 11, 18, 19});
      }
      break;
    case PartLabel::stripes:
      switch (g) {
        case GarmentClass::shirt: return cross_cells({10, 11, 14, 15, 18, 19}, {10, 11});
        case GarmentClass::dress: return cross_cells({18, 19, 22, 23}, {9, 10});
        case GarmentClass::jacket: return cross_cells({10, 11, 14, 15, 18, 19}, {9, 10});
        case GarmentClass::pants: return cross_cells({10, 11, 18, 19}, {10, 11});
      }
      break;
    default: break;
  }
  throw DataError("no probe for part " + part_name(part));
}

Cells base_probe_cells(GarmentClass g) {
  switch (g) {
    case GarmentClass::shirt: return cross_cells({12, 16, 20}, {10, 11, 14, 17});
    case GarmentClass::dress: {
      Cells cells = cross_cells({20, 21}, {9, 10, 11});
      Cells more = cross_cells({12, 13}, {11, 12});
      cells.insert(cells.end(), more.begin(), more.end());
      return cells;
    }
    case GarmentClass::jacket: return cross_cells({12, 16, 20}, {10, 11, 14, 21});
    case GarmentClass::pants: return cross_cells({12, 16, 20}, {10, 11});
  }
  throw DataError("unknown garment class");
}

Cells sleeve_probe_cells(GarmentClass g) {
  switch (g) {
    case GarmentClass::shirt: return rect_cells({10, 13, 5, 8});
    case GarmentClass::dress: return rect_cells({7, 10, 6, 9});
    case GarmentClass::jacket: return rect_cells({9, 16, 4, 7});
    case GarmentClass::pants: return {};
  }
  throw DataError("unknown garment class");
}

}  // namespace

const std::array<Color, kPaletteSize>& palette() {
  static const std::array<Color, kPaletteSize> p = {{
      {217, 30, 30},    // red
      {30, 180, 45},    // green
      {38, 64, 217},    // blue
      {235, 217, 36},   // yellow
      {140, 40, 178},   // purple
      {242, 128, 25},   // orange
      {235, 235, 235},  // white
      {30, 30, 33},     // black
  }};
  return p;
}

const std::array<std::string, kPaletteSize>& color_names() {
  static const std::array<std::string, kPaletteSize> n = {
      "red", "green", "blue", "yellow", "purple", "orange", "white", "black"};
  return n;
}

Color background_color() { return {128, 128, 128}; }

const std::string& part_name(PartLabel p) {
  static const std::array<std::string, kMaskClasses> names = {
      "background", "body", "sleeves", "collar", "pocket", "buttons", "zip", "belt", "stripes"};
  return names[static_cast<size_t>(p)];
}

const std::string& class_name(GarmentClass c) {
  static const std::array<std::string, 4> names = {"shirt", "dress", "jacket", "pants"};
  return names[static_cast<size_t>(c)];
}

PartLabel part_from_name(const std::string& name) {
  for (int i = 0; i < kMaskClasses; ++i)
    if (part_name(static_cast<PartLabel>(i)) == name) return static_cast<PartLabel>(i);
  throw DataError("unknown part name: " + name);
}

bool GarmentSpec::has(PartLabel p) const {
  return std::find(parts.begin(), parts.end(), p) != parts.end();
}

GarmentSpec sample_spec(uint64_t seed) {
  Rng rng(mix_seed(seed, kSpecTag));
  GarmentSpec spec;
  spec.seed = seed;
  spec.base_color = rng.uniform_int(0, kPaletteSize - 1);
  spec.garment = static_cast<GarmentClass>(rng.uniform_int(0, 3));

  const double u = rng.uniform();
  const int count = u < 0.25 ? 2 : (u < 0.75 ? 3 : 4);
  std::array<PartLabel, 6> pool = kOptionalParts;
  rng.shuffle(pool.begin(), pool.end());
  spec.parts.assign(pool.begin(), pool.begin() + count);
  std::sort(spec.parts.begin(), spec.parts.end());

  std::vector<int> colors;
  for (int i = 0; i < kPaletteSize; ++i)
    if (i != spec.base_color) colors.push_back(i);
  rng.shuffle(colors.begin(), colors.end());
  spec.part_color.fill(-1);
  for (size_t i = 0; i < spec.parts.size(); ++i)
    spec.part_color[static_cast<size_t>(spec.parts[i])] = colors[i];
  return spec;
}

void render(const GarmentSpec& spec, Image& image, MaskImage& mask) {
  image = Image(kCanvas, kCanvas);
  mask = MaskImage(kCanvas, kCanvas);
  const Color bg = background_color();
  for (int y = 0; y < kCanvas; ++y)
    for (int x = 0; x < kCanvas; ++x) {
      image.at(y, x, 0) = bg.r / 255.0;
      image.at(y, x, 1) = bg.g / 255.0;
      image.at(y, x, 2) = bg.b / 255.0;
    }

  const ClassLayout& lay = layout(spec.garment);
  const Color base = palette()[static_cast<size_t>(spec.base_color)];
  for (const Rect& r : lay.body) draw_rect(image, mask, r, base, PartLabel::body);
  for (const Rect& r : lay.sleeves) draw_rect(image, mask, r, base, PartLabel::sleeves);

  auto part_col = [&](PartLabel p) {
    return palette()[static_cast<size_t>(spec.part_color[static_cast<size_t>(p)])];
  };

  if (spec.has(PartLabel::stripes)) {
    const Color col = part_col(PartLabel::stripes);
    for (int y : kStripeRows)
      for (int x = 0; x < kCanvas; ++x)
        if (mask.at(y, x) == static_cast<uint8_t>(PartLabel::body)) {
          image.at(y, x, 0) = col.r / 255.0;
          image.at(y, x, 1) = col.g / 255.0;
          image.at(y, x, 2) = col.b / 255.0;
          mask.at(y, x) = static_cast<uint8_t>(PartLabel::stripes);
        }
  }
  if (spec.has(PartLabel::zip))
    draw_rect(image, mask, lay.zip, part_col(PartLabel::zip), PartLabel::zip);
  if (spec.has(PartLabel::buttons))
    for (const Rect& dot : lay.button_dots)
      draw_rect(image, mask, dot, part_col(PartLabel::buttons), PartLabel::buttons);
  if (spec.has(PartLabel::pocket))
    draw_rect(image, mask, lay.pocket, part_col(PartLabel::pocket), PartLabel::pocket);
  if (spec.has(PartLabel::collar))
    draw_rect(image, mask, lay.collar, part_col(PartLabel::collar), PartLabel::collar);
  if (spec.has(PartLabel::belt))
    draw_rect(image, mask, lay.belt, part_col(PartLabel::belt), PartLabel::belt);
}

std::vector<std::string> compose_caption(const GarmentSpec& spec) {
  std::vector<std::string> words = {"a", color_names()[static_cast<size_t>(spec.base_color)],
                                    class_name(spec.garment)};
  if (!spec.parts.empty()) {
    words.push_back("with");
    std::vector<PartLabel> order = spec.parts;
    Rng rng(mix_seed(spec.seed, kCaptionTag));
    rng.shuffle(order.begin(), order.end());
    for (PartLabel p : order) words.push_back(part_name(p));
  }
  return words;
}

CaptionInfo parse_caption(const std::vector<std::string>& words) {
  if (words.size() < 3 || words[0] != "a")
    throw DataError("caption does not start with 'a {color} {class}'");
  CaptionInfo info;
  for (int i = 0; i < kPaletteSize; ++i)
    if (color_names()[static_cast<size_t>(i)] == words[1]) info.base_color = i;
  if (info.base_color < 0) throw DataError("unknown color word: " + words[1]);
  bool class_found = false;
  for (int c = 0; c < 4; ++c)
    if (class_name(static_cast<GarmentClass>(c)) == words[2]) {
      info.garment = static_cast<GarmentClass>(c);
      class_found = true;
    }
  if (!class_found) throw DataError("unknown class word: " + words[2]);
  if (words.size() > 3) {
    if (words[3] != "with") throw DataError("expected 'with' after class word");
    if (words.size() == 4) throw DataError("'with' clause is empty");
    for (size_t i = 4; i < words.size(); ++i) {
      const PartLabel p = part_from_name(words[i]);
      if (std::find(kOptionalParts.begin(), kOptionalParts.end(), p) == kOptionalParts.end())
        throw DataError("word is not an optional part: " + words[i]);
      if (info.parts.count(p)) throw DataError("part mentioned twice: " + words[i]);
      info.parts.insert(p);
    }
  }
  return info;
}

std::set<PartLabel> expected_parts(const CaptionInfo& info) {
  std::set<PartLabel> parts = info.parts;
  parts.insert(PartLabel::body);
  if (info.garment != GarmentClass::pants) parts.insert(PartLabel::sleeves);
  return parts;
}

void partial_crop_at(const Image& image, int oy, int ox, Image& partial, BinaryImage& valid) {
  const int h = image.h, w = image.w;
  if (h % 2 || w % 2) throw DataError("partial_crop: image extents must be even");
  const int wh = h / 2, ww = w / 2;
  if (oy < 0 || ox < 0 || oy + wh > h || ox + ww > w)
    throw DataError("partial_crop: window offset out of range");
  partial = Image(h, w);
  valid = BinaryImage(h, w);
  for (int y = oy; y < oy + wh; ++y)
    for (int x = ox; x < ox + ww; ++x) {
      for (int c = 0; c < 3; ++c) partial.at(y, x, c) = image.at(y, x, c);
      valid.at(y, x) = 1;
    }
}

void partial_crop(const Image& image, uint64_t seed, Image& partial, BinaryImage& valid) {
  if (image.h % 2 || image.w % 2) throw DataError("partial_crop: image extents must be even");
  Rng rng(mix_seed(seed, 0xC40F));
  const int oy = rng.uniform_int(0, image.h / 2);
  const int ox = rng.uniform_int(0, image.w / 2);
  partial_crop_at(image, oy, ox, partial, valid);
}

std::set<PartLabel> detect_parts(const Image& image) {
  std::set<PartLabel> found;
  if (image.h != kCanvas || image.w != kCanvas)
    throw DataError("detect_parts: expected a 32x32 image");

  // class from silhouette occupancy
  GarmentClass g;
  if (count_occupied(image, cross_cells({14, 15, 16, 17, 18, 19, 20, 21, 22}, {15, 16})) <= 3 &&
      count_occupied(image, cross_cells({14, 15, 16, 17, 18, 19, 20, 21, 22}, {11, 12, 13})) >= 14 &&
      count_occupied(image, cross_cells({14, 15, 16, 17, 18, 19, 20, 21, 22}, {18, 19, 20})) >= 14) {
    g = GarmentClass::pants;
  } else if (count_occupied(image, cross_cells({20, 21, 22, 23, 24, 25, 26}, {8})) >= 4) {
    g = GarmentClass::dress;
  } else if (count_occupied(image, cross_cells({17, 18}, {4, 5, 6, 7})) >= 4) {
    g = GarmentClass::jacket;
  } else {
    g = GarmentClass::shirt;
  }

  const Cells base_cells = base_probe_cells(g);
  const int base = dominant_color(image, base_cells, static_cast<int>(base_cells.size() + 1) / 2);
  if (base < 0) return found;  // no recognizable garment
  found.insert(PartLabel::body);

  const Cells sleeves = sleeve_probe_cells(g);
  if (!sleeves.empty() &&
      count_color(image, sleeves, base) * 2 >= static_cast<int>(sleeves.size()))
    found.insert(PartLabel::sleeves);

  for (PartLabel part : kOptionalParts) {
    const Cells cells = probe_cells(g, part);
    const int need = (static_cast<int>(cells.size()) * 3 + 4) / 5;  // ceil(0.6*n)
    const int dom = dominant_color(image, cells, need);
    if (dom >= 0 && dom != base) found.insert(part);
  }
  return found;
}

std::vector<std::string> grammar_words() {
  std::vector<std::string> words = {"a", "with"};
  for (const std::string& c : color_names()) words.push_back(c);
  for (int c = 0; c < 4; ++c) words.push_back(class_name(static_cast<GarmentClass>(c)));
  for (PartLabel p : kOptionalParts) words.push_back(part_name(p));
  return words;
}

}  // namespace atelier::synth

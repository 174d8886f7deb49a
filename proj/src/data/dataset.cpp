#include "atelier/data/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "atelier/core/rng.hpp"
#include "atelier/data/canny.hpp"
#include "atelier/data/pnm.hpp"

namespace atelier::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr uint64_t kPartialTag = 0x9A57;

std::vector<uint8_t> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

uint64_t files_checksum(const std::string& root, const ManifestEntry& e) {
  uint64_t h = 1469598103934665603ULL;
  for (const std::string& name : {e.image, e.mask, e.sketch, e.partial}) {
    const auto bytes = file_bytes((fs::path(root) / name).string());
    h = fnv1a(bytes.data(), bytes.size(), h);
  }
  return h;
}
}  // namespace

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string caption_string(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::vector<std::string> split_words(const std::string& caption) {
  std::vector<std::string> words;
  std::istringstream in(caption);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

GarmentSample make_sample(uint64_t seed) {
  GarmentSample s;
  s.spec = sample_spec(seed);
  render(s.spec, s.image, s.mask);
  s.caption = compose_caption(s.spec);
  s.sketch = canny_sketch(s.image);
  partial_crop(s.image, mix_seed(seed, kPartialTag), s.partial, s.partial_valid);
  return s;
}

Manifest write_dataset(const std::vector<uint64_t>& seeds, const std::string& root,
                       const std::string& split) {
  {
    std::set<uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size())
      throw IoError("write_dataset: duplicate seeds would produce duplicate ids");
  }
  fs::create_directories(root);
  Manifest man;
  man.root = root;
  man.split = split;

  const std::string manifest_path = (fs::path(root) / (split + "_manifest.jsonl")).string();
  std::ofstream out(manifest_path);
  if (!out) throw IoError(manifest_path + ": cannot open for writing");

  for (uint64_t seed : seeds) {
    const GarmentSample s = make_sample(seed);
    ManifestEntry e;
    e.id = split + "-g" + std::to_string(seed);
    e.image = e.id + "_image.ppm";
    e.mask = e.id + "_mask.pgm";
    e.sketch = e.id + "_sketch.pgm";
    e.partial = e.id + "_partial.ppm";
    e.caption = caption_string(s.caption);
    e.spec_seed = seed;
    e.split = split;

    write_ppm((fs::path(root) / e.image).string(), s.image);
    write_pgm((fs::path(root) / e.mask).string(), s.mask.labels, s.mask.h, s.mask.w, 8);
    write_pgm((fs::path(root) / e.sketch).string(), s.sketch.v, s.sketch.h, s.sketch.w, 1);
    write_ppm((fs::path(root) / e.partial).string(), s.partial);
    e.checksum = files_checksum(root, e);

    json line = {{"id", e.id},           {"image", e.image},
                 {"mask", e.mask},       {"sketch", e.sketch},
                 {"partial", e.partial}, {"caption", e.caption},
                 {"spec_seed", e.spec_seed}, {"split", e.split},
                 {"checksum", e.checksum}};
    out << line.dump() << "\n";
    man.entries.push_back(std::move(e));
  }
  if (!out) throw IoError(manifest_path + ": write failed");
  return man;
}

Manifest read_manifest(const std::string& root, const std::string& split) {
  const std::string manifest_path = (fs::path(root) / (split + "_manifest.jsonl")).string();
  std::ifstream in(manifest_path);
  if (!in) throw IoError(manifest_path + ": cannot open");
  Manifest man;
  man.root = root;
  man.split = split;
  std::set<std::string> seen_ids;
  std::string line;
  size_t lineno = 0;
  static const std::set<std::string> kKeys = {"id",      "image",     "mask",
                                              "sketch",  "partial",   "caption",
                                              "spec_seed", "split",   "checksum"};
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      throw IoError(manifest_path + ":" + std::to_string(lineno) + ": malformed JSON (" +
                    ex.what() + ")");
    }
    for (const auto& [key, val] : j.items())
      if (!kKeys.count(key))
        throw IoError(manifest_path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.image = j.at("image").get<std::string>();
      e.mask = j.at("mask").get<std::string>();
      e.sketch = j.at("sketch").get<std::string>();
      e.partial = j.at("partial").get<std::string>();
      e.caption = j.at("caption").get<std::string>();
      e.spec_seed = j.at("spec_seed").get<uint64_t>();
      e.split = j.at("split").get<std::string>();
      e.checksum = j.at("checksum").get<uint64_t>();
    } catch (const json::exception& ex) {
      throw IoError(manifest_path + ":" + std::to_string(lineno) + ": missing field (" + ex.what() +
                    ")");
    }
    if (!seen_ids.insert(e.id).second)
      throw IoError(manifest_path + ":" + std::to_string(lineno) + ": duplicate id '" + e.id + "'");
    man.entries.push_back(std::move(e));
  }
  return man;
}

std::vector<GarmentSample> read_dataset(const std::string& root, const std::string& split) {
  const Manifest man = read_manifest(root, split);
  std::vector<GarmentSample> samples;
  samples.reserve(man.entries.size());
  for (const ManifestEntry& e : man.entries) {
    if (files_checksum(root, e) != e.checksum)
      throw IoError(e.id + ": checksum mismatch, dataset files were modified");
    GarmentSample s;
    s.spec = sample_spec(e.spec_seed);
    s.image = read_ppm((fs::path(root) / e.image).string());
    int h = 0, w = 0, maxval = 0;
    s.mask.labels = read_pgm((fs::path(root) / e.mask).string(), &h, &w, &maxval);
    s.mask.h = h;
    s.mask.w = w;
    if (maxval != 8) throw IoError(e.mask + ": mask maxval must be 8");
    s.sketch.v = read_pgm((fs::path(root) / e.sketch).string(), &h, &w, &maxval);
    s.sketch.h = h;
    s.sketch.w = w;
    s.partial = read_ppm((fs::path(root) / e.partial).string());
    s.caption = split_words(e.caption);
    // validity window is a pure function of the spec seed
    Image regen_partial;
    partial_crop(s.image, mix_seed(e.spec_seed, kPartialTag), regen_partial, s.partial_valid);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace atelier::synth

#pragma once

#include <string>
#include <vector>

#include "atelier/data/synth.hpp"

namespace atelier::synth {

struct GarmentSample {
  GarmentSpec spec;
  Image image;
  MaskImage mask;
  std::vector<std::string> caption;
  BinaryImage sketch;
  Image partial;
  BinaryImage partial_valid;
};

// The entire sample is a pure function of the seed.
GarmentSample make_sample(uint64_t seed);

struct ManifestEntry {
  std::string id;
  std::string image, mask, sketch, partial;  // file names relative to root
  std::string caption;                       // space-joined words
  uint64_t spec_seed = 0;
  std::string split;
  uint64_t checksum = 0;  // fnv1a over the four files' bytes
};

struct Manifest {
  std::string root;
  std::string split;
  std::vector<ManifestEntry> entries;
};

// Writes PPM/PGM files plus a JSON-lines manifest ("<split>_manifest.jsonl").
// Seeds must be unique; ids derive from them.
Manifest write_dataset(const std::vector<uint64_t>& seeds, const std::string& root,
                       const std::string& split);

Manifest read_manifest(const std::string& root, const std::string& split);

// Loads every sample listed in the manifest, verifying existence, shape, and
// checksums. The partial-crop validity mask is recomputed from the spec seed.
std::vector<GarmentSample> read_dataset(const std::string& root, const std::string& split);

std::string caption_string(const std::vector<std::string>& words);
std::vector<std::string> split_words(const std::string& caption);

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL);

}  // namespace atelier::synth

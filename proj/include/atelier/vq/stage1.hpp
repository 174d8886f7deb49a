#pragma once

#include <utility>
#include <vector>

#include "atelier/clip/maskclip.hpp"
#include "atelier/clip/predictor.hpp"
#include "atelier/core/nn.hpp"
#include "atelier/data/dataset.hpp"

namespace atelier::vq {

struct Codebook {
  Tensor entries;              // [K, code_dim]
  std::vector<int64_t> usage;  // per-entry counters since the last reset

  Codebook() = default;
  Codebook(int64_t k, int64_t code_dim, Rng& rng);  // uniform in [-1/K, 1/K]

  int64_t size() const { return entries.defined() ? entries.dim(0) : 0; }
  int64_t code_dim() const { return entries.dim(1); }
  // Nearest entry by Euclidean distance; ties break toward the lowest index.
  int64_t nearest(const double* vec) const;
  void reset_usage();
  int64_t used_entries() const;
};

// Single-vector quantization: (index, entry copy); bumps the usage counter.
std::pair<int64_t, std::vector<double>> quantize(const std::vector<double>& vec, Codebook& cb);

struct QuantizeResult {
  std::vector<int64_t> indices;  // raster order
  Tensor codes;   // straight-through: forward = entries, gradient -> features
  Tensor rows;    // embed_rows(entries, indices): gradient -> codebook
};

// Quantizes every row of a feature grid, incrementing usage counters.
QuantizeResult quantize_grid(const Tensor& features, Codebook& cb);

// Forward copies `rows` exactly (bit-for-bit); backward hands the incoming
// gradient to `features` unchanged. The identity-Jacobian contract of the
// straight-through estimator.
Tensor straight_through(const Tensor& features, const Tensor& rows);

struct Stage1Config {
  int64_t codebook_size = 128;
  int64_t code_dim = 64;
  int hidden = 48;
  int image_h = 32, image_w = 32;
  int in_channels = 3;
  double beta = 0.25;     // commitment weight
  double lambda1 = 0.9;   // reconstruction + codebook block
  double lambda2 = 0.1;   // semantic block
  bool fusion = true;
  int64_t clip_dim = 64;  // text-token width feeding the fusion projection
  int tile_channels = 0;  // 0: paint RGB tiles directly from the grid

  int grid_h() const { return image_h / 4; }
  int grid_w() const { return image_w / 4; }
  int64_t grid_positions() const { return static_cast<int64_t>(grid_h()) * grid_w(); }
};

// Convolutional encoder/decoder around a learnable codebook, with an optional
// projection that mixes selected text tokens into the pre-quantization path.
struct Stage1Model {
  Stage1Config cfg;
  nn::Conv2d enc_in, enc_mid, enc_down, enc_out;
  // decoder runs at grid resolution and paints per-cell 4x4 pixel tiles
  nn::Conv2d dec_in, dec_mid, dec_tiles;
  Codebook codebook;
  nn::Linear text_proj;  // clip_dim -> code_dim

  Stage1Model() = default;
  Stage1Model(Stage1Config cfg, uint64_t seed);

  Tensor encode_batch(const Tensor& images, int batch) const;  // [batch*grid, code_dim]
  Tensor decode_batch(const Tensor& codes, int batch) const;   // [batch*h*w, in_channels]
  Tensor encode(const Tensor& image) const { return encode_batch(image, 1); }
  Tensor decode(const Tensor& codes) const { return decode_batch(codes, 1); }

  // (features + P(text_rows)) / 2, or features unchanged when fusion is off.
  Tensor fuse(const Tensor& features, const Tensor& text_rows) const;

  nn::ParamRegistry params() const;
};

// Per grid position, the text token with the largest dot product against the
// co-located MaskCLIP mask token. Rows are constants w.r.t. stage-1 training.
Tensor select_text_tokens(const Tensor& clip_mask_tokens, const Tensor& clip_text_tokens,
                          std::vector<int64_t>* selection = nullptr);

struct VqLossParts {
  Tensor total;       // rec + codebook + beta*commit
  Tensor rec, codebook, commit;
};
VqLossParts vq_loss(const Tensor& target, const Tensor& decoded, const Tensor& fused,
                    const QuantizeResult& q, double beta);

// 1 - sim(MaskCLIP(predicted soft mask of the decoded image), caption tokens).
// caption_tokens are precomputed constants from the frozen text tower.
Tensor semantic_loss(const Tensor& decoded, const clip::MaskPredictor& predictor,
                     const clip::MaskClipModel& clip_model, const Tensor& caption_tokens);
// Batched: decoded stacks `batch` images; one loss scalar per sample, meaned.
Tensor semantic_loss_batch(const Tensor& decoded, int batch,
                           const clip::MaskPredictor& predictor,
                           const clip::MaskClipModel& clip_model,
                           const std::vector<Tensor>& caption_tokens);

struct Stage1TrainOptions {
  int64_t steps = 2500;
  int64_t batch = 16;
  double lr = 3e-4;
  double weight_decay = 0.01;
  uint64_t seed = 0;
  int64_t reseed_every = 250;  // dead-entry reseed window ("per epoch" at desk scale)
  bool verbose = false;
};

struct Stage1TrainLog {
  std::vector<double> total, rec, semantic;
  double final_utilization = 0.0;
  bool dead_codebook_warning = false;
};

// clip_model is required when fusion or the semantic term is on; predictor
// when the semantic term is on. Both stay frozen.
Stage1Model train_stage1(const std::vector<synth::GarmentSample>& samples, Stage1Config cfg,
                         const clip::MaskClipModel* clip_model,
                         const clip::MaskPredictor* predictor, const Stage1TrainOptions& opts,
                         Stage1TrainLog* log = nullptr);

// Lower-level loop over pre-extracted input maps; fusion rows and caption
// tokens are per-sample constants and may be empty when the corresponding
// term is off. The signal codebooks train through this entry point.
Stage1Model train_stage1_core(const std::vector<Tensor>& inputs, Stage1Config cfg,
                              const clip::MaskClipModel* clip_model,
                              const clip::MaskPredictor* predictor,
                              const std::vector<Tensor>& fused_rows,
                              const std::vector<Tensor>& caption_tokens,
                              const Stage1TrainOptions& opts, Stage1TrainLog* log = nullptr);

// Raster-scan code indices for one sample (applies fusion when configured).
std::vector<int64_t> tokenize_image(const Stage1Model& model,
                                    const clip::MaskClipModel* clip_model,
                                    const synth::GarmentSample& sample);
// Looks up entries and decodes; throws on out-of-range indices.
Tensor detokenize(const Stage1Model& model, const std::vector<int64_t>& indices);

// Frozen-model reconstruction (encode, fuse, quantize, decode) of one sample.
Tensor reconstruct(const Stage1Model& model, const clip::MaskClipModel* clip_model,
                   const synth::GarmentSample& sample);

// The per-position fusion source rows for one sample: selected text tokens
// under the frozen MaskCLIP towers (constant during stage-1 training).
Tensor fusion_rows(const clip::MaskClipModel& clip_model, const synth::GarmentSample& sample);

}  // namespace atelier::vq

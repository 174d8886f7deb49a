#pragma once

#include <utility>
#include <vector>

#include "atelier/clip/vocab.hpp"
#include "atelier/core/nn.hpp"
#include "atelier/core/ops.hpp"
#include "atelier/core/rng.hpp"
#include "atelier/data/dataset.hpp"

namespace atelier::clip {

struct MaskClipConfig {
  int64_t embed_dim = 64;
  int depth = 2;
  int heads = 4;
  int patch = 4;
  bool normalize = true;       // unit-norm token rows
  double tau_init = 1.0 / 0.07;  // similarity scale ahead of the softmax
  // Chebyshev radius of the mask tower's attention window in patch units;
  // 0 means global attention. Local windows keep patch tokens content-local,
  // which the word-part alignment readout depends on.
  int local_window = 1;
  int image_h = 32, image_w = 32;
  int mask_classes = synth::kMaskClasses;
  int max_caption = 16;  // positions reserved for text tokens (incl. BOS)

  int64_t grid_h() const { return image_h / patch; }
  int64_t grid_w() const { return image_w / patch; }
  int64_t mask_tokens() const { return grid_h() * grid_w(); }
  void validate() const;
};

// Dual encoders over part masks and captions with token-wise similarities.
struct MaskClipModel {
  MaskClipConfig cfg;
  TextVocab vocab;

  nn::Conv2d patch_embed;  // kernel = stride = patch size
  Tensor mask_pos;
  std::vector<nn::TransformerBlock> mask_blocks;
  nn::LayerNorm mask_final;

  Tensor token_embed;
  Tensor text_pos;
  std::vector<nn::TransformerBlock> text_blocks;
  nn::LayerNorm text_final;

  Tensor log_tau;  // [1]

  MaskClipModel() = default;
  MaskClipModel(MaskClipConfig cfg, TextVocab vocab, uint64_t seed);

  // Soft or hard one-hot planes [h*w, classes] -> [n1, d] token rows.
  Tensor encode_mask_planes(const Tensor& planes) const;
  // Batched: planes stacked along rows, output [batch*n1, d].
  Tensor encode_mask_planes_batch(const Tensor& planes, int batch) const;
  Tensor encode_mask(const synth::MaskImage& mask) const;
  // BOS-prefixed ids -> [n2, d] token rows.
  Tensor encode_text_tokens(const std::vector<int64_t>& ids) const;
  // Variable-length captions packed back to back; returns row offsets
  // (size captions+1) alongside the packed [sum n2, d] tokens.
  Tensor encode_text_tokens_packed(const std::vector<std::vector<int64_t>>& ids,
                                   std::vector<int64_t>* offsets) const;
  Tensor encode_text(const std::vector<std::string>& caption) const;

  double tau_value() const;
  // Additive attention bias restricting mask-tower attention to the local
  // window (constant, cached).
  Tensor mask_window_bias() const;
  nn::ParamRegistry params() const;
  // Keeps exp(log_tau) within (0, 100], applied after each optimizer step.
  void clamp_tau();
};

// Largest dot product of one visual token row against every text token row,
// plus the winning index (ties to the lowest index). Inputs [1,d] and [n2,d].
std::pair<double, int64_t> token_max_similarity(const Tensor& z, const Tensor& text_tokens);

// Mean over visual tokens of their best text-token dot product (differentiable
// scalar; the argmax selection is constant during backward).
Tensor sim_mask_to_text(const Tensor& mask_tokens, const Tensor& text_tokens);
// Mirror: mean over text tokens of their best visual-token dot product.
Tensor sim_text_to_mask(const Tensor& mask_tokens, const Tensor& text_tokens);

// Symmetric batch contrastive loss over per-pair similarities, scaled by
// exp(log_tau) ahead of the softmax. Pass a constant zero log-tau to reproduce
// the raw unscaled form.
Tensor maskclip_loss(const std::vector<Tensor>& mask_token_sets,
                     const std::vector<Tensor>& text_token_sets, const Tensor& log_tau);

struct TrainLog {
  std::vector<double> loss;
  double wall_seconds = 0.0;
};

struct MaskClipTrainOptions {
  int64_t steps = 1500;
  int64_t batch = 16;
  double lr = 3e-4;
  double weight_decay = 0.01;
  uint64_t seed = 0;
  bool verbose = false;
};

MaskClipModel train_maskclip(const std::vector<synth::GarmentSample>& samples,
                             const MaskClipConfig& cfg, const MaskClipTrainOptions& opts,
                             TrainLog* log = nullptr);

// Candidates sorted by sim_text_to_mask, descending; stable under ties.
// Returns candidate indices best-first.
std::vector<int64_t> retrieve(const MaskClipModel& model, const std::vector<std::string>& caption,
                              const std::vector<const synth::MaskImage*>& candidates);

struct AlignMap {
  int64_t grid_h = 0, grid_w = 0;
  std::vector<double> heat;   // similarity per mask patch, row-major
  int64_t argmax_patch = 0;   // flat patch index
};

// Similarity heatmap between one caption word's text token and every mask
// patch token. word must appear in the caption.
AlignMap align_map(const MaskClipModel& model, const std::vector<std::string>& caption,
                   const std::string& word, const synth::MaskImage& mask);

}  // namespace atelier::clip

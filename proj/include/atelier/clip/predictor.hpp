#pragma once

#include "atelier/core/nn.hpp"
#include "atelier/core/rng.hpp"
#include "atelier/data/dataset.hpp"

namespace atelier::clip {

// Small convolutional segmentation net: per-pixel class probabilities over the
// 8 parts plus background. Differentiable end-to-end (soft masks feed the
// semantic loss); frozen after supervised training on rendered ground truth.
struct MaskPredictor {
  int hidden = 32;
  int classes = synth::kMaskClasses;
  nn::Conv2d c1, c2, c3, c4;

  MaskPredictor() = default;
  MaskPredictor(int hidden, uint64_t seed);

  // [h*w, 3] image -> [h*w, classes] probabilities (rows sum to 1).
  Tensor operator()(const Tensor& image, int h, int w) const;
  Tensor forward_batch(const Tensor& images, int h, int w, int batch) const;
  nn::ParamRegistry params() const;
};

struct PredictorTrainOptions {
  int64_t steps = 600;
  int64_t batch = 16;
  double lr = 1e-3;
  uint64_t seed = 0;
  bool verbose = false;
};

MaskPredictor train_mask_predictor(const std::vector<synth::GarmentSample>& samples,
                                   const PredictorTrainOptions& opts,
                                   std::vector<double>* loss_log = nullptr);

// Per-pixel argmax accuracy against ground-truth masks.
double predictor_accuracy(const MaskPredictor& net,
                          const std::vector<synth::GarmentSample>& samples);

}  // namespace atelier::clip

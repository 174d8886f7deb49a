#pragma once

#include "atelier/core/tensor.hpp"
#include "atelier/data/synth.hpp"

// Conversions between the dataset's image structs and [rows, cols] tensors.
// Images travel as channel-last flattened maps: [h*w, channels].

namespace atelier::synth {

Tensor image_tensor(const Image& img);                          // [h*w, 3]
Image tensor_image(const Tensor& t, int h, int w);              // clamps to [0,1]
Tensor mask_onehot(const MaskImage& mask, int classes = kMaskClasses);  // [h*w, classes]
Tensor sketch_tensor(const BinaryImage& sketch);                // [h*w, 1]
// RGB plus a validity plane. Invalid pixels carry zeros.
Tensor partial_tensor(const Image& partial, const BinaryImage& valid);  // [h*w, 4]

double psnr(const Image& a, const Image& b);
// PSNR restricted to pixels where the validity mask is set.
double psnr_masked(const Image& a, const Image& b, const BinaryImage& valid);

}  // namespace atelier::synth

#pragma once

#include "atelier/data/synth.hpp"

namespace atelier::synth {

// Classic Canny pipeline on an RGB image in [0,1]:
//   luminance (0.299/0.587/0.114) -> 5x5 Gaussian blur (sigma 1.0, clamped
//   borders) -> Sobel gradients -> 4-direction non-maximum suppression
//   (magnitude >= both neighbors along the gradient; out-of-bounds reads 0)
//   -> double threshold at 0.1/0.2 of the max magnitude -> hysteresis keeping
//   weak pixels 8-connected to a strong one.
//
// Images whose max gradient magnitude is <= 1e-12 (constant inputs up to
// summation residue) yield all zeros. Requires H,W >= 8.
BinaryImage canny_sketch(const Image& image);

}  // namespace atelier::synth

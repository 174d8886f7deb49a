#include "atelier/data/bridge.hpp"

#include <algorithm>
#include <cmath>

namespace atelier::synth {

Tensor image_tensor(const Image& img) {
  return Tensor::from({static_cast<int64_t>(img.h) * img.w, 3}, img.px);
}

Image tensor_image(const Tensor& t, int h, int w) {
  if (t.size() != static_cast<int64_t>(h) * w * 3)
    throw DataError("tensor_image: element count does not match geometry");
  Image img(h, w);
  for (size_t i = 0; i < img.px.size(); ++i)
    img.px[i] = std::clamp(t.values()[i], 0.0, 1.0);
  return img;
}

Tensor mask_onehot(const MaskImage& mask, int classes) {
  const int64_t n = static_cast<int64_t>(mask.h) * mask.w;
  std::vector<double> planes(static_cast<size_t>(n * classes), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t lab = mask.labels[static_cast<size_t>(i)];
    if (lab >= classes) throw DataError("mask_onehot: label exceeds class count");
    planes[static_cast<size_t>(i * classes + lab)] = 1.0;
  }
  return Tensor::from({n, classes}, std::move(planes));
}

Tensor sketch_tensor(const BinaryImage& sketch) {
  const int64_t n = static_cast<int64_t>(sketch.h) * sketch.w;
  std::vector<double> v(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i)] = sketch.v[static_cast<size_t>(i)];
  return Tensor::from({n, 1}, std::move(v));
}

Tensor partial_tensor(const Image& partial, const BinaryImage& valid) {
  const int64_t n = static_cast<int64_t>(partial.h) * partial.w;
  std::vector<double> v(static_cast<size_t>(n * 4), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) v[static_cast<size_t>(i * 4 + c)] = partial.px[static_cast<size_t>(i * 3 + c)];
    v[static_cast<size_t>(i * 4 + 3)] = valid.v[static_cast<size_t>(i)];
  }
  return Tensor::from({n, 4}, std::move(v));
}

double psnr(const Image& a, const Image& b) {
  if (a.px.size() != b.px.size()) throw DataError("psnr: size mismatch");
  double se = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    const double d = a.px[i] - b.px[i];
    se += d * d;
  }
  const double mse_v = se / static_cast<double>(a.px.size());
  if (mse_v <= 0.0) return 99.0;
  return 10.0 * std::log10(1.0 / mse_v);
}

double psnr_masked(const Image& a, const Image& b, const BinaryImage& valid) {
  double se = 0.0;
  int64_t n = 0;
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) {
      if (!valid.at(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        se += d * d;
        ++n;
      }
    }
  if (n == 0) throw DataError("psnr_masked: empty validity mask");
  const double mse_v = se / static_cast<double>(n);
  if (mse_v <= 0.0) return 99.0;
  return 10.0 * std::log10(1.0 / mse_v);
}

}  // namespace atelier::synth

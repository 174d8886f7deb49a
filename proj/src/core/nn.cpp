#include "atelier/core/nn.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <unordered_map>

namespace atelier::nn {

namespace {

// im2col / upsample plans depend only on geometry; share them process-wide.
using PlanKey = std::array<int, 7>;
std::shared_ptr<const GatherPlan> cached_plan(const PlanKey& key,
                                              const std::function<std::shared_ptr<const GatherPlan>()>& make) {
  static std::mutex mu;
  static std::map<PlanKey, std::shared_ptr<const GatherPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto plan = make();
  cache.emplace(key, plan);
  return plan;
}

std::shared_ptr<const GatherPlan> im2col_plan(int h, int w, int ch, int ksize, int stride,
                                              int pad) {
  const int oh = (h + 2 * pad - ksize) / stride + 1;
  const int ow = (w + 2 * pad - ksize) / stride + 1;
  const int64_t cols = static_cast<int64_t>(ksize) * ksize * ch;
  std::vector<int64_t> src(static_cast<size_t>(oh) * ow * cols);
  size_t o = 0;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int ky = 0; ky < ksize; ++ky)
        for (int kx = 0; kx < ksize; ++kx)
          for (int c = 0; c < ch; ++c) {
            const int py = oy * stride - pad + ky;
            const int px = ox * stride - pad + kx;
            src[o++] = (py < 0 || py >= h || px < 0 || px >= w)
                           ? -1
                           : (static_cast<int64_t>(py) * w + px) * ch + c;
          }
  return GatherPlan::make({static_cast<int64_t>(oh) * ow, cols}, std::move(src),
                          static_cast<int64_t>(h) * w * ch);
}

std::shared_ptr<const GatherPlan> upsample2x_plan(int h, int w, int ch) {
  std::vector<int64_t> src(static_cast<size_t>(4) * h * w * ch);
  size_t o = 0;
  for (int y = 0; y < 2 * h; ++y)
    for (int x = 0; x < 2 * w; ++x)
      for (int c = 0; c < ch; ++c)
        src[o++] = (static_cast<int64_t>(y / 2) * w + x / 2) * ch + c;
  return GatherPlan::make({static_cast<int64_t>(4) * h * w, ch}, std::move(src),
                          static_cast<int64_t>(h) * w * ch);
}

std::shared_ptr<const GatherPlan> depth_to_space_plan(int h, int w, int block, int ch) {
  const int oh = h * block, ow = w * block;
  std::vector<int64_t> src(static_cast<size_t>(oh) * ow * ch);
  size_t o = 0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int c = 0; c < ch; ++c) {
        const int by = y / block, bx = x / block, py = y % block, px = x % block;
        src[o++] = (static_cast<int64_t>(by) * w + bx) * (block * block * ch) +
                   (static_cast<int64_t>(py) * block + px) * ch + c;
      }
  return GatherPlan::make({static_cast<int64_t>(oh) * ow, ch}, std::move(src),
                          static_cast<int64_t>(h) * w * block * block * ch);
}

// Stacks `batch` copies of a per-image plan with shifted source offsets.
std::shared_ptr<const GatherPlan> batched_plan(const std::shared_ptr<const GatherPlan>& unit,
                                               int batch) {
  const int64_t out_rows = unit->out_shape[0];
  const int64_t cols = unit->out_shape[1];
  std::vector<int64_t> src(static_cast<size_t>(batch) * out_rows * cols);
  size_t o = 0;
  for (int b = 0; b < batch; ++b) {
    const int64_t shift = static_cast<int64_t>(b) * unit->in_elems;
    for (int64_t i = 0; i < out_rows * cols; ++i)
      src[o++] = unit->src[static_cast<size_t>(i)] < 0 ? -1 : unit->src[static_cast<size_t>(i)] + shift;
  }
  return GatherPlan::make({static_cast<int64_t>(batch) * out_rows, cols}, std::move(src),
                          static_cast<int64_t>(batch) * unit->in_elems);
}

}  // namespace

Linear::Linear(int64_t in, int64_t out, Rng& rng, bool with_bias) {
  std::vector<double> w(static_cast<size_t>(in * out));
  const double sd = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w) v = rng.normal(0.0, sd);
  weight = Tensor::param({in, out}, std::move(w));
  if (with_bias) bias = Tensor::param({out}, std::vector<double>(static_cast<size_t>(out), 0.0));
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  if (bias.defined()) y = add_rowvec(y, bias);
  return y;
}

void Linear::register_params(ParamRegistry& reg, const std::string& prefix) const {
  reg.add(prefix + ".weight", weight);
  if (bias.defined()) reg.add(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(int64_t width) {
  gain = Tensor::param({width}, std::vector<double>(static_cast<size_t>(width), 1.0));
  bias = Tensor::param({width}, std::vector<double>(static_cast<size_t>(width), 0.0));
}

void LayerNorm::register_params(ParamRegistry& reg, const std::string& prefix) const {
  reg.add(prefix + ".gain", gain);
  reg.add(prefix + ".bias", bias);
}

// qkv carries no bias: a key-side bias shifts every attention score in a row
// by the same amount, which the softmax cancels, leaving a parameter with an
// exactly-zero gradient that finite differences cannot certify.
//
// The residual output projections start at zero, so a freshly initialized
// block is the identity map and mixing across tokens is introduced only as
// training asks for it. Token-wise similarity losses keep their per-patch
// meaning this way instead of collapsing into global summaries.
TransformerBlock::TransformerBlock(int64_t width_, int heads_, bool causal_, Rng& rng)
    : ln1(width_),
      ln2(width_),
      qkv(width_, 3 * width_, rng, /*with_bias=*/false),
      proj(width_, width_, rng),
      fc1(width_, 4 * width_, rng),
      fc2(4 * width_, width_, rng),
      heads(heads_),
      width(width_),
      causal(causal_) {
  if (width_ % heads_ != 0) throw ShapeError("TransformerBlock: width not divisible by heads");
  for (int64_t i = 0; i < proj.weight.size(); ++i) proj.weight.set(i, 0.0);
  for (int64_t i = 0; i < fc2.weight.size(); ++i) fc2.weight.set(i, 0.0);
}

Tensor causal_mask(int64_t len) {
  thread_local std::unordered_map<int64_t, Tensor> cache;
  auto it = cache.find(len);
  if (it != cache.end()) return it->second;
  std::vector<double> m(static_cast<size_t>(len * len), 0.0);
  for (int64_t i = 0; i < len; ++i)
    for (int64_t j = i + 1; j < len; ++j) m[static_cast<size_t>(i * len + j)] = -1e30;
  Tensor t = Tensor::from({len, len}, std::move(m));
  cache.emplace(len, t);
  return t;
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  return forward_segments(x, {{0, x.dim(0)}});
}

Tensor TransformerBlock::forward_segments(
    const Tensor& x, const std::vector<std::pair<int64_t, int64_t>>& segments,
    const Tensor* attn_bias) const {
  const int64_t hd = width / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor h = ln1(x);
  Tensor qkv_out = qkv(h);
  std::vector<Tensor> seg_outs;
  seg_outs.reserve(segments.size());
  for (const auto& [s0, s1] : segments) {
    Tensor seg = slice_rows(qkv_out, s0, s1);
    const int64_t len = s1 - s0;
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int hi = 0; hi < heads; ++hi) {
      Tensor q = slice_cols(seg, hi * hd, (hi + 1) * hd);
      Tensor k = slice_cols(seg, width + hi * hd, width + (hi + 1) * hd);
      Tensor v = slice_cols(seg, 2 * width + hi * hd, 2 * width + (hi + 1) * hd);
      Tensor scores = scale(matmul_nt(q, k), att_scale);
      if (causal) scores = add(scores, causal_mask(len));
      if (attn_bias) scores = add(scores, *attn_bias);
      Tensor att = softmax_rows(scores);
      head_outs.push_back(matmul(att, v));
    }
    seg_outs.push_back(concat_cols(head_outs));
  }
  Tensor attn = proj(seg_outs.size() == 1 ? seg_outs[0] : concat_rows(seg_outs));
  Tensor x1 = add(x, attn);

  Tensor m = fc2(gelu(fc1(ln2(x1))));
  return add(x1, m);
}

void TransformerBlock::register_params(ParamRegistry& reg, const std::string& prefix) const {
  ln1.register_params(reg, prefix + ".ln1");
  qkv.register_params(reg, prefix + ".qkv");
  proj.register_params(reg, prefix + ".proj");
  ln2.register_params(reg, prefix + ".ln2");
  fc1.register_params(reg, prefix + ".fc1");
  fc2.register_params(reg, prefix + ".fc2");
}

Conv2d::Conv2d(int in_ch_, int out_ch_, int ksize_, int stride_, int pad_, Rng& rng)
    : in_ch(in_ch_), out_ch(out_ch_), ksize(ksize_), stride(stride_), pad(pad_) {
  const int64_t fan_in = static_cast<int64_t>(ksize) * ksize * in_ch;
  std::vector<double> w(static_cast<size_t>(fan_in * out_ch));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w) v = rng.normal(0.0, sd);
  weight = Tensor::param({fan_in, out_ch}, std::move(w));
  bias = Tensor::param({out_ch}, std::vector<double>(static_cast<size_t>(out_ch), 0.0));
}

void Conv2d::out_geometry(int h, int w, int* oh, int* ow) const {
  if (oh) *oh = (h + 2 * pad - ksize) / stride + 1;
  if (ow) *ow = (w + 2 * pad - ksize) / stride + 1;
}

Tensor Conv2d::operator()(const Tensor& x, int h, int w, int* oh, int* ow) const {
  if (x.rank() != 2 || x.dim(0) != static_cast<int64_t>(h) * w || x.dim(1) != in_ch)
    throw ShapeError("Conv2d: input is not an [h*w, in_ch] map");
  auto plan = cached_plan({h, w, in_ch, ksize, stride, pad, 1},
                          [&] { return im2col_plan(h, w, in_ch, ksize, stride, pad); });
  out_geometry(h, w, oh, ow);
  return add_rowvec(matmul(gather(x, plan), weight), bias);
}

Tensor Conv2d::forward_batch(const Tensor& x, int h, int w, int batch) const {
  if (batch == 1) return (*this)(x, h, w);
  if (x.rank() != 2 || x.dim(0) != static_cast<int64_t>(batch) * h * w || x.dim(1) != in_ch)
    throw ShapeError("Conv2d: input is not a [batch*h*w, in_ch] map");
  auto unit = cached_plan({h, w, in_ch, ksize, stride, pad, 1},
                          [&] { return im2col_plan(h, w, in_ch, ksize, stride, pad); });
  auto plan = cached_plan({h, w, in_ch, ksize, stride, pad, batch},
                          [&] { return batched_plan(unit, batch); });
  return add_rowvec(matmul(gather(x, plan), weight), bias);
}

void Conv2d::register_params(ParamRegistry& reg, const std::string& prefix) const {
  reg.add(prefix + ".weight", weight);
  reg.add(prefix + ".bias", bias);
}

Tensor upsample2x(const Tensor& x, int h, int w) { return upsample2x_batch(x, h, w, 1); }

Tensor depth_to_space(const Tensor& x, int h, int w, int block, int ch) {
  return depth_to_space_batch(x, h, w, block, ch, 1);
}

Tensor depth_to_space_batch(const Tensor& x, int h, int w, int block, int ch, int batch) {
  if (x.dim(0) != static_cast<int64_t>(batch) * h * w ||
      x.dim(1) != static_cast<int64_t>(block) * block * ch)
    throw ShapeError("depth_to_space: input must be [batch*h*w, block*block*ch]");
  auto unit = cached_plan({h, w, ch, block, -2, -2, 1},
                          [&] { return depth_to_space_plan(h, w, block, ch); });
  if (batch == 1) return gather(x, unit);
  auto plan = cached_plan({h, w, ch, block, -2, -2, batch},
                          [&] { return batched_plan(unit, batch); });
  return gather(x, plan);
}

Tensor upsample2x_batch(const Tensor& x, int h, int w, int batch) {
  const int64_t ch = x.dim(1);
  if (x.dim(0) != static_cast<int64_t>(batch) * h * w)
    throw ShapeError("upsample2x: input is not a [batch*h*w, ch] map");
  auto unit = cached_plan({h, w, static_cast<int>(ch), -1, -1, -1, 1},
                          [&] { return upsample2x_plan(h, w, static_cast<int>(ch)); });
  if (batch == 1) return gather(x, unit);
  auto plan = cached_plan({h, w, static_cast<int>(ch), -1, -1, -1, batch},
                          [&] { return batched_plan(unit, batch); });
  return gather(x, plan);
}

}  // namespace atelier::nn

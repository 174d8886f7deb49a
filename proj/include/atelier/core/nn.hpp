#pragma once

#include <string>
#include <vector>

#include "atelier/core/ops.hpp"
#include "atelier/core/rng.hpp"
#include "atelier/core/tensor.hpp"

namespace atelier::nn {

// Ordered, named parameter list. Order is fixed by registration, which makes
// optimizer state and checkpoints deterministic.
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, const Tensor& t) { items.emplace_back(name, t); }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(items.size());
    for (const auto& [name, t] : items) out.push_back(t);
    return out;
  }
  int64_t count() const {
    int64_t n = 0;
    for (const auto& [name, t] : items) n += t.size();
    return n;
  }
  void zero_grad() {
    for (auto& [name, t] : items) {
      Tensor tt = t;
      tt.zero_grad();
    }
  }
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], undefined when bias-less
  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  LayerNorm() = default;
  explicit LayerNorm(int64_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Pre-norm transformer block: x += proj(attn(ln1(x))); x += mlp(ln2(x)).
// Causal blocks add a strictly-upper-triangular -inf mask before the softmax.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear qkv, proj, fc1, fc2;
  int heads = 1;
  int64_t width = 0;
  bool causal = false;

  TransformerBlock() = default;
  TransformerBlock(int64_t width, int heads, bool causal, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  // Packed variant: rows hold several sequences back to back and attention is
  // restricted to each [start,end) segment. Dense projections run over the
  // whole pack, so batched training feeds full-width matmuls. attn_bias, when
  // given, is an additive [len,len] constant applied to every segment's
  // scores (segments must then share one length).
  Tensor forward_segments(const Tensor& x,
                          const std::vector<std::pair<int64_t, int64_t>>& segments,
                          const Tensor* attn_bias = nullptr) const;
  void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Additive attention mask for a causal block of the given length (constant,
// cached per length per thread).
Tensor causal_mask(int64_t len);

// 2-D convolution over channel-last flattened images ([h*w, in_ch] rows).
// Lowered to an index-map gather (im2col) plus one matmul; gather plans are
// cached per geometry in a shared registry.
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
  Tensor weight;  // [ksize*ksize*in_ch, out_ch]
  Tensor bias;    // [out_ch]

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, Rng& rng);
  // Consumes an [h*w, in_ch] map, reports the output geometry.
  Tensor operator()(const Tensor& x, int h, int w, int* oh = nullptr, int* ow = nullptr) const;
  // Batched: x stacks `batch` maps of identical geometry, [batch*h*w, in_ch].
  Tensor forward_batch(const Tensor& x, int h, int w, int batch) const;
  void out_geometry(int h, int w, int* oh, int* ow) const;
  void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Nearest-neighbor 2x upsample of an [h*w, ch] map.
Tensor upsample2x(const Tensor& x, int h, int w);
Tensor upsample2x_batch(const Tensor& x, int h, int w, int batch);

// Rearranges an [h*w, block*block*ch] map into [(block*h)*(block*w), ch]:
// each grid cell paints its own block x block pixel tile.
Tensor depth_to_space(const Tensor& x, int h, int w, int block, int ch);
Tensor depth_to_space_batch(const Tensor& x, int h, int w, int block, int ch, int batch);

}  // namespace atelier::nn

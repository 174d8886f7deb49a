#pragma once

#include <memory>
#include <vector>

#include "atelier/core/tensor.hpp"

// Differentiable operation set. Forward computes eagerly through the kernels;
// when the active tape is recording and any input carries gradients, a
// backward step is appended that accumulates (+=) into the input grads.
//
// The op set is closed: matmul (plain and transposed-B), elementwise
// add/sub/mul/scale, row-broadcast bias, softmax, layer_norm, l2_normalize,
// GELU, embedding lookup, cross-entropy-with-logits, sum/mean reductions,
// row/column slicing and concatenation, index-map gathers, row-wise max with
// constant argmax, scalar stacking, reshape, and detach. Everything else in
// the models is composed from these.

namespace atelier {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k] -> a * b^T

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // a[m,n] + v[n] per row

Tensor gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Rows scaled to unit Euclidean norm; rows with norm <= 1e-12 map to zero.
Tensor l2_normalize_rows(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Per-row maximum over columns; ties break toward the lowest column index.
// The argmax is treated as a constant during backward. Optionally reports the
// winning column per row.
Tensor max_rows(const Tensor& x, std::vector<int64_t>* argmax = nullptr);

// Mean over rows of -log softmax(logits)[target]; gradient (p - onehot)/rows.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int64_t>& targets);

Tensor embed_rows(const Tensor& table, const std::vector<int64_t>& ids);

Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1);  // half-open [r0,r1)
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Arbitrary element gather described by a prebuilt index map. Entries of -1
// read as 0. The plan's inverse adjacency makes the backward scatter a
// deterministic per-input-element sum.
struct GatherPlan {
  Shape out_shape;
  std::vector<int64_t> src;  // out element -> in element (or -1)
  int64_t in_elems = 0;
  std::vector<int64_t> inv_begin;  // CSR over in elements
  std::vector<int64_t> inv_out;

  static std::shared_ptr<const GatherPlan> make(Shape out_shape, std::vector<int64_t> src,
                                                int64_t in_elems);
};
Tensor gather(const Tensor& x, std::shared_ptr<const GatherPlan> plan);

// Packs scalar tensors into one [rows, cols] matrix (row-major order).
Tensor stack_scalars(const std::vector<Tensor>& scalars, int64_t rows, int64_t cols);

Tensor reshape(const Tensor& x, Shape shape);
// Copies values into a fresh constant leaf; gradients do not flow back.
Tensor detach(const Tensor& x);

// Elementwise exp and scaling by a scalar tensor; these exist for the
// learnable log-temperature in the contrastive loss.
Tensor exp_elem(const Tensor& x);
Tensor scale_by(const Tensor& a, const Tensor& s);  // s is a [1] tensor

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// mean((a-b)^2), composed from the closed set.
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace atelier

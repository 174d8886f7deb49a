#include "atelier/core/ops.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "atelier/core/kernels.hpp"

namespace atelier {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                                      shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Rows/cols view of an arbitrary-rank tensor: last axis = cols.
std::pair<int64_t, int64_t> rows_cols(const Tensor& t) {
  if (t.rank() == 0) throw ShapeError("rows_cols: undefined tensor");
  int64_t cols = t.dim(t.rank() - 1);
  return {t.size() / cols, cols};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Tensor c = Tensor::zeros({m, n});
  kernels::matmul_acc(a.data(), b.data(), c.data(), m, k, n);
  auto& tape = Tape::active();
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    c.enable_grad();
    NodePtr an = a.node(), bn = b.node(), cn = c.node();
    tape.record([an, bn, cn, m, k, n] {
      if (an->requires_grad)
        kernels::matmul_nt_acc(cn->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      if (bn->requires_grad)
        kernels::matmul_tn_acc(an->value.data(), cn->grad.data(), bn->grad.data(), k, m, n);
    });
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeError("matmul_nt: inner extents disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  Tensor c = Tensor::zeros({m, n});
  kernels::matmul_nt_acc(a.data(), b.data(), c.data(), m, k, n);
  auto& tape = Tape::active();
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    c.enable_grad();
    NodePtr an = a.node(), bn = b.node(), cn = c.node();
    tape.record([an, bn, cn, m, k, n] {
      // dA += dC * B ; dB += dC^T * A
      if (an->requires_grad)
        kernels::matmul_acc(cn->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      if (bn->requires_grad)
        kernels::matmul_tn_acc(cn->grad.data(), an->value.data(), bn->grad.data(), n, m, k);
    });
  }
  return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = Tensor::zeros(a.shape());
  kernels::add(a.data(), b.data(), c.data(), a.size());
  auto& tape = Tape::active();
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    c.enable_grad();
    NodePtr an = a.node(), bn = b.node(), cn = c.node();
    tape.record([an, bn, cn] {
      const int64_t n = static_cast<int64_t>(cn->grad.size());
      if (an->requires_grad) kernels::axpy(1.0, cn->grad.data(), an->grad.data(), n);
      if (bn->requires_grad) kernels::axpy(1.0, cn->grad.data(), bn->grad.data(), n);
    });
  }
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = Tensor::zeros(a.shape());
  kernels::sub(a.data(), b.data(), c.data(), a.size());
  auto& tape = Tape::active();
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    c.enable_grad();
    NodePtr an = a.node(), bn = b.node(), cn = c.node();
    tape.record([an, bn, cn] {
      const int64_t n = static_cast<int64_t>(cn->grad.size());
      if (an->requires_grad) kernels::axpy(1.0, cn->grad.data(), an->grad.data(), n);
      if (bn->requires_grad) kernels::axpy(-1.0, cn->grad.data(), bn->grad.data(), n);
    });
  }
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor c = Tensor::zeros(a.shape());
  kernels::mul(a.data(), b.data(), c.data(), a.size());
  auto& tape = Tape::active();
  if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
    c.enable_grad();
    NodePtr an = a.node(), bn = b.node(), cn = c.node();
    tape.record([an, bn, cn] {
      const int64_t n = static_cast<int64_t>(cn->grad.size());
      if (an->requires_grad) kernels::mul_acc(cn->grad.data(), bn->value.data(), an->grad.data(), n);
      if (bn->requires_grad) kernels::mul_acc(cn->grad.data(), an->value.data(), bn->grad.data(), n);
    });
  }
  return c;
}

Tensor scale(const Tensor& a, double c) {
  Tensor y = Tensor::zeros(a.shape());
  kernels::scale(a.data(), y.data(), c, a.size());
  auto& tape = Tape::active();
  if (tape.recording() && a.requires_grad()) {
    y.enable_grad();
    NodePtr an = a.node(), yn = y.node();
    tape.record([an, yn, c] {
      kernels::axpy(c, yn->grad.data(), an->grad.data(), static_cast<int64_t>(yn->grad.size()));
    });
  }
  return y;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  auto [rows, cols] = rows_cols(a);
  if (v.size() != cols)
    throw ShapeError("add_rowvec: vector length " + std::to_string(v.size()) +
                     " does not match row width " + std::to_string(cols));
  Tensor c = Tensor::zeros(a.shape());
  const double* ad = a.data();
  const double* vd = v.data();
  double* cd = c.data();
#pragma omp parallel for schedule(static) if (rows * cols > 16384 && !omp_in_parallel())
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) cd[i * cols + j] = ad[i * cols + j] + vd[j];
  auto& tape = Tape::active();
  if (tape.recording() && (a.requires_grad() || v.requires_grad())) {
    c.enable_grad();
    NodePtr an = a.node(), vn = v.node(), cn = c.node();
    tape.record([an, vn, cn, rows, cols] {
      if (an->requires_grad)
        kernels::axpy(1.0, cn->grad.data(), an->grad.data(), rows * cols);
      if (vn->requires_grad) {
        // fixed row-ascending accumulation
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < cols; ++j) vn->grad[static_cast<size_t>(j)] += cn->grad[static_cast<size_t>(i * cols + j)];
      }
    });
  }
  return c;
}

Tensor gelu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  kernels::gelu(x.data(), y.data(), x.size());
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn] {
      kernels::gelu_grad(xn->value.data(), yn->grad.data(), xn->grad.data(),
                         static_cast<int64_t>(xn->value.size()));
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  auto [rows, cols] = rows_cols(x);
  Tensor y = Tensor::zeros(x.shape());
  kernels::softmax_rows(x.data(), y.data(), rows, cols);
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn, rows, cols] {
      const double* yv = yn->value.data();
      const double* dy = yn->grad.data();
      double* dx = xn->grad.data();
#pragma omp parallel for schedule(static) if (rows * cols > 16384 && !omp_in_parallel())
      for (int64_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < cols; ++j) s += dy[i * cols + j] * yv[i * cols + j];
        for (int64_t j = 0; j < cols; ++j)
          dx[i * cols + j] += yv[i * cols + j] * (dy[i * cols + j] - s);
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  auto [rows, cols] = rows_cols(x);
  if (gain.size() != cols || bias.size() != cols)
    throw ShapeError("layer_norm: gain/bias width must equal " + std::to_string(cols));
  Tensor y = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * cols));
  auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  {
    const double* xd = x.data();
    const double* g = gain.data();
    const double* b = bias.data();
    double* yd = y.data();
    double* xh = xhat->data();
    double* iv = inv->data();
#pragma omp parallel for schedule(static) if (rows * cols > 8192 && !omp_in_parallel())
    for (int64_t i = 0; i < rows; ++i) {
      const double* row = xd + i * cols;
      double mu = 0.0;
      for (int64_t j = 0; j < cols; ++j) mu += row[j];
      mu /= static_cast<double>(cols);
      double var = 0.0;
      for (int64_t j = 0; j < cols; ++j) {
        const double d = row[j] - mu;
        var += d * d;
      }
      var /= static_cast<double>(cols);
      const double is = 1.0 / std::sqrt(var + eps);
      iv[i] = is;
      for (int64_t j = 0; j < cols; ++j) {
        const double h = (row[j] - mu) * is;
        xh[i * cols + j] = h;
        yd[i * cols + j] = g[j] * h + b[j];
      }
    }
  }
  auto& tape = Tape::active();
  if (tape.recording() && (x.requires_grad() || gain.requires_grad() || bias.requires_grad())) {
    y.enable_grad();
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node(), yn = y.node();
    tape.record([xn, gn, bn, yn, xhat, inv, rows, cols] {
      const double* dy = yn->grad.data();
      const double* xh = xhat->data();
      const double* iv = inv->data();
      if (gn->requires_grad || bn->requires_grad) {
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < cols; ++j) {
            if (gn->requires_grad)
              gn->grad[static_cast<size_t>(j)] += dy[i * cols + j] * xh[i * cols + j];
            if (bn->requires_grad) bn->grad[static_cast<size_t>(j)] += dy[i * cols + j];
          }
      }
      if (xn->requires_grad) {
        const double* g = gn->value.data();
        double* dx = xn->grad.data();
#pragma omp parallel for schedule(static) if (rows * cols > 8192 && !omp_in_parallel())
        for (int64_t i = 0; i < rows; ++i) {
          double mean_u = 0.0, mean_uh = 0.0;
          for (int64_t j = 0; j < cols; ++j) {
            const double u = dy[i * cols + j] * g[j];
            mean_u += u;
            mean_uh += u * xh[i * cols + j];
          }
          mean_u /= static_cast<double>(cols);
          mean_uh /= static_cast<double>(cols);
          for (int64_t j = 0; j < cols; ++j) {
            const double u = dy[i * cols + j] * g[j];
            dx[i * cols + j] += iv[i] * (u - mean_u - xh[i * cols + j] * mean_uh);
          }
        }
      }
    });
  }
  return y;
}

Tensor l2_normalize_rows(const Tensor& x) {
  constexpr double kEps = 1e-12;
  auto [rows, cols] = rows_cols(x);
  Tensor y = Tensor::zeros(x.shape());
  auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  {
    const double* xd = x.data();
    double* yd = y.data();
    double* nd = norms->data();
    for (int64_t i = 0; i < rows; ++i) {
      double n2 = 0.0;
      for (int64_t j = 0; j < cols; ++j) n2 += xd[i * cols + j] * xd[i * cols + j];
      const double nrm = std::sqrt(n2);
      nd[i] = nrm;
      const double inv = nrm > kEps ? 1.0 / nrm : 0.0;
      for (int64_t j = 0; j < cols; ++j) yd[i * cols + j] = xd[i * cols + j] * inv;
    }
  }
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn, norms, rows, cols] {
      const double* dy = yn->grad.data();
      const double* yv = yn->value.data();
      double* dx = xn->grad.data();
      for (int64_t i = 0; i < rows; ++i) {
        const double nrm = (*norms)[static_cast<size_t>(i)];
        if (nrm <= kEps) continue;  // zero row: treated as constant zero
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += dy[i * cols + j] * yv[i * cols + j];
        const double inv = 1.0 / nrm;
        for (int64_t j = 0; j < cols; ++j)
          dx[i * cols + j] += (dy[i * cols + j] - yv[i * cols + j] * dot) * inv;
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  Tensor y = Tensor::scalar(kernels::reduce_sum(x.data(), x.size()));
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn] {
      const double g = yn->grad[0];
      for (double& d : xn->grad) d += g;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor y = Tensor::scalar(kernels::reduce_sum(x.data(), x.size()) * inv);
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn, inv] {
      const double g = yn->grad[0] * inv;
      for (double& d : xn->grad) d += g;
    });
  }
  return y;
}

Tensor max_rows(const Tensor& x, std::vector<int64_t>* argmax) {
  auto [rows, cols] = rows_cols(x);
  if (cols < 1) throw ContractError("max_rows: empty rows");
  Tensor y = Tensor::zeros({rows});
  auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(rows));
  {
    const double* xd = x.data();
    double* yd = y.data();
    for (int64_t i = 0; i < rows; ++i) {
      int64_t best = 0;
      double bv = xd[i * cols];
      for (int64_t j = 1; j < cols; ++j) {
        if (xd[i * cols + j] > bv) {  // strict: ties keep the lowest index
          bv = xd[i * cols + j];
          best = j;
        }
      }
      yd[i] = bv;
      (*idx)[static_cast<size_t>(i)] = best;
    }
  }
  if (argmax) *argmax = *idx;
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn, idx, rows, cols] {
      for (int64_t i = 0; i < rows; ++i)
        xn->grad[static_cast<size_t>(i * cols + (*idx)[static_cast<size_t>(i)])] += yn->grad[static_cast<size_t>(i)];
    });
  }
  return y;
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int64_t>& targets) {
  require_rank2(logits, "cross_entropy_with_logits");
  const int64_t rows = logits.dim(0), cols = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != rows)
    throw ShapeError("cross_entropy_with_logits: expected " + std::to_string(rows) + " targets");
  for (int64_t t : targets)
    if (t < 0 || t >= cols)
      throw ContractError("cross_entropy_with_logits: target index " + std::to_string(t) +
                          " outside [0," + std::to_string(cols) + ")");
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * cols));
  kernels::softmax_rows(logits.data(), probs->data(), rows, cols);
  double total = 0.0;
  {
    const double* xd = logits.data();
    for (int64_t i = 0; i < rows; ++i) {
      const double* row = xd + i * cols;
      double mx = row[0];
      for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
      double lse = 0.0;
      for (int64_t j = 0; j < cols; ++j) lse += std::exp(row[j] - mx);
      total += mx + std::log(lse) - row[targets[static_cast<size_t>(i)]];
    }
  }
  Tensor y = Tensor::scalar(total / static_cast<double>(rows));
  auto& tape = Tape::active();
  if (tape.recording() && logits.requires_grad()) {
    y.enable_grad();
    NodePtr xn = logits.node(), yn = y.node();
    auto tgt = std::make_shared<std::vector<int64_t>>(targets);
    tape.record([xn, yn, probs, tgt, rows, cols] {
      const double g = yn->grad[0] / static_cast<double>(rows);
      double* dx = xn->grad.data();
      const double* p = probs->data();
      for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < cols; ++j) dx[i * cols + j] += g * p[i * cols + j];
        dx[i * cols + (*tgt)[static_cast<size_t>(i)]] -= g;
      }
    });
  }
  return y;
}

Tensor embed_rows(const Tensor& table, const std::vector<int64_t>& ids) {
  require_rank2(table, "embed_rows");
  const int64_t vocab = table.dim(0), width = table.dim(1);
  const int64_t n = static_cast<int64_t>(ids.size());
  for (int64_t id : ids)
    if (id < 0 || id >= vocab)
      throw ContractError("embed_rows: index " + std::to_string(id) + " outside [0," +
                          std::to_string(vocab) + ")");
  Tensor y = Tensor::zeros({n, width});
  {
    const double* td = table.data();
    double* yd = y.data();
    for (int64_t i = 0; i < n; ++i)
      std::copy(td + ids[static_cast<size_t>(i)] * width, td + (ids[static_cast<size_t>(i)] + 1) * width, yd + i * width);
  }
  auto& tape = Tape::active();
  if (tape.recording() && table.requires_grad()) {
    y.enable_grad();
    NodePtr tn = table.node(), yn = y.node();
    auto idsp = std::make_shared<std::vector<int64_t>>(ids);
    tape.record([tn, yn, idsp, n, width] {
      const double* dy = yn->grad.data();
      for (int64_t i = 0; i < n; ++i) {
        double* dst = tn->grad.data() + (*idsp)[static_cast<size_t>(i)] * width;
        for (int64_t j = 0; j < width; ++j) dst[j] += dy[i * width + j];
      }
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) {
  require_rank2(x, "slice_rows");
  const int64_t rows = x.dim(0), cols = x.dim(1);
  if (r0 < 0 || r1 > rows || r0 >= r1)
    throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") for " + std::to_string(rows) + " rows");
  Tensor y = Tensor::zeros({r1 - r0, cols});
  std::copy(x.data() + r0 * cols, x.data() + r1 * cols, y.data());
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn, r0, cols] {
      kernels::axpy(1.0, yn->grad.data(), xn->grad.data() + r0 * cols,
                    static_cast<int64_t>(yn->grad.size()));
    });
  }
  return y;
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
  require_rank2(x, "slice_cols");
  const int64_t rows = x.dim(0), cols = x.dim(1);
  if (c0 < 0 || c1 > cols || c0 >= c1)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") for " + std::to_string(cols) + " cols");
  const int64_t w = c1 - c0;
  Tensor y = Tensor::zeros({rows, w});
  {
    const double* xd = x.data();
    double* yd = y.data();
    for (int64_t i = 0; i < rows; ++i)
      std::copy(xd + i * cols + c0, xd + i * cols + c1, yd + i * w);
  }
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn, c0, rows, cols, w] {
      const double* dy = yn->grad.data();
      double* dx = xn->grad.data();
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < w; ++j) dx[i * cols + c0 + j] += dy[i * w + j];
    });
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const int64_t cols = parts[0].rank() == 2 ? parts[0].dim(1) : -1;
  if (cols < 0) throw ShapeError("concat_rows: parts must be rank-2");
  int64_t rows = 0;
  bool needs = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.dim(0);
    needs = needs || p.requires_grad();
  }
  Tensor y = Tensor::zeros({rows, cols});
  {
    double* yd = y.data();
    int64_t off = 0;
    for (const Tensor& p : parts) {
      std::copy(p.data(), p.data() + p.size(), yd + off);
      off += p.size();
    }
  }
  auto& tape = Tape::active();
  if (tape.recording() && needs) {
    y.enable_grad();
    std::vector<NodePtr> nodes;
    nodes.reserve(parts.size());
    for (const Tensor& p : parts) nodes.push_back(p.node());
    NodePtr yn = y.node();
    tape.record([nodes, yn] {
      int64_t off = 0;
      for (const NodePtr& p : nodes) {
        const int64_t n = static_cast<int64_t>(p->value.size());
        if (p->requires_grad) kernels::axpy(1.0, yn->grad.data() + off, p->grad.data(), n);
        off += n;
      }
    });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const int64_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : -1;
  if (rows < 0) throw ShapeError("concat_cols: parts must be rank-2");
  int64_t cols = 0;
  bool needs = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.dim(1);
    needs = needs || p.requires_grad();
  }
  Tensor y = Tensor::zeros({rows, cols});
  {
    double* yd = y.data();
    int64_t off = 0;
    for (const Tensor& p : parts) {
      const int64_t w = p.dim(1);
      const double* pd = p.data();
      for (int64_t i = 0; i < rows; ++i)
        std::copy(pd + i * w, pd + (i + 1) * w, yd + i * cols + off);
      off += w;
    }
  }
  auto& tape = Tape::active();
  if (tape.recording() && needs) {
    y.enable_grad();
    std::vector<NodePtr> nodes;
    std::vector<int64_t> widths;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      widths.push_back(p.dim(1));
    }
    NodePtr yn = y.node();
    tape.record([nodes, widths, yn, rows, cols] {
      int64_t off = 0;
      for (size_t t = 0; t < nodes.size(); ++t) {
        const int64_t w = widths[t];
        if (nodes[t]->requires_grad) {
          const double* dy = yn->grad.data();
          double* dx = nodes[t]->grad.data();
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < w; ++j) dx[i * w + j] += dy[i * cols + off + j];
        }
        off += w;
      }
    });
  }
  return y;
}

std::shared_ptr<const GatherPlan> GatherPlan::make(Shape out_shape, std::vector<int64_t> src,
                                                   int64_t in_elems) {
  auto plan = std::make_shared<GatherPlan>();
  if (numel(out_shape) != static_cast<int64_t>(src.size()))
    throw ShapeError("GatherPlan: index count does not match output shape");
  plan->out_shape = std::move(out_shape);
  plan->in_elems = in_elems;
  plan->inv_begin.assign(static_cast<size_t>(in_elems) + 1, 0);
  for (int64_t s : src) {
    if (s >= in_elems) throw ShapeError("GatherPlan: source index out of range");
    if (s >= 0) plan->inv_begin[static_cast<size_t>(s) + 1]++;
  }
  for (size_t i = 1; i < plan->inv_begin.size(); ++i) plan->inv_begin[i] += plan->inv_begin[i - 1];
  plan->inv_out.assign(static_cast<size_t>(plan->inv_begin.back()), 0);
  std::vector<int64_t> cursor(plan->inv_begin.begin(), plan->inv_begin.end() - 1);
  for (int64_t o = 0; o < static_cast<int64_t>(src.size()); ++o) {
    const int64_t s = src[static_cast<size_t>(o)];
    if (s >= 0) plan->inv_out[static_cast<size_t>(cursor[static_cast<size_t>(s)]++)] = o;
  }
  plan->src = std::move(src);
  return plan;
}

Tensor gather(const Tensor& x, std::shared_ptr<const GatherPlan> plan) {
  if (x.size() != plan->in_elems)
    throw ShapeError("gather: input has " + std::to_string(x.size()) + " elements, plan expects " +
                     std::to_string(plan->in_elems));
  Tensor y = Tensor::zeros(plan->out_shape);
  {
    const double* xd = x.data();
    double* yd = y.data();
    const int64_t n = y.size();
    const int64_t* src = plan->src.data();
#pragma omp parallel for schedule(static) if (n > 16384 && !omp_in_parallel())
    for (int64_t i = 0; i < n; ++i) yd[i] = src[i] >= 0 ? xd[src[i]] : 0.0;
  }
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn, plan] {
      const double* dy = yn->grad.data();
      double* dx = xn->grad.data();
      const int64_t n = plan->in_elems;
#pragma omp parallel for schedule(static) if (n > 8192 && !omp_in_parallel())
      for (int64_t e = 0; e < n; ++e) {
        double g = 0.0;
        for (int64_t t = plan->inv_begin[static_cast<size_t>(e)]; t < plan->inv_begin[static_cast<size_t>(e) + 1]; ++t)
          g += dy[plan->inv_out[static_cast<size_t>(t)]];
        dx[e] += g;
      }
    });
  }
  return y;
}

Tensor stack_scalars(const std::vector<Tensor>& scalars, int64_t rows, int64_t cols) {
  if (static_cast<int64_t>(scalars.size()) != rows * cols)
    throw ShapeError("stack_scalars: need exactly rows*cols scalars");
  Tensor y = Tensor::zeros({rows, cols});
  bool needs = false;
  for (int64_t i = 0; i < rows * cols; ++i) {
    const Tensor& s = scalars[static_cast<size_t>(i)];
    if (s.size() != 1) throw ShapeError("stack_scalars: non-scalar part");
    y.set(i, s.at(0));
    needs = needs || s.requires_grad();
  }
  auto& tape = Tape::active();
  if (tape.recording() && needs) {
    y.enable_grad();
    std::vector<NodePtr> nodes;
    nodes.reserve(scalars.size());
    for (const Tensor& s : scalars) nodes.push_back(s.node());
    NodePtr yn = y.node();
    tape.record([nodes, yn] {
      for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i]->requires_grad) nodes[i]->grad[0] += yn->grad[i];
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                     shape_str(shape));
  Tensor y = Tensor::from(std::move(shape), x.values());
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn] {
      kernels::axpy(1.0, yn->grad.data(), xn->grad.data(), static_cast<int64_t>(xn->grad.size()));
    });
  }
  return y;
}

Tensor detach(const Tensor& x) {
  Tensor y = Tensor::from(x.shape(), x.values());
  return y;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  Tensor d = sub(a, b);
  return mean(mul(d, d));
}

Tensor exp_elem(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y.set(i, std::exp(x.at(i)));
  auto& tape = Tape::active();
  if (tape.recording() && x.requires_grad()) {
    y.enable_grad();
    NodePtr xn = x.node(), yn = y.node();
    tape.record([xn, yn] {
      for (size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i] * yn->value[i];
    });
  }
  return y;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scale_by: scale must be a [1] tensor");
  Tensor y = Tensor::zeros(a.shape());
  kernels::scale(a.data(), y.data(), s.at(0), a.size());
  auto& tape = Tape::active();
  if (tape.recording() && (a.requires_grad() || s.requires_grad())) {
    y.enable_grad();
    NodePtr an = a.node(), sn = s.node(), yn = y.node();
    tape.record([an, sn, yn] {
      const int64_t n = static_cast<int64_t>(yn->grad.size());
      if (an->requires_grad) kernels::axpy(sn->value[0], yn->grad.data(), an->grad.data(), n);
      if (sn->requires_grad) {
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) acc += yn->grad[static_cast<size_t>(i)] * an->value[static_cast<size_t>(i)];
        sn->grad[0] += acc;
      }
    });
  }
  return y;
}

}  // namespace atelier

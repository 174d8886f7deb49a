#include "atelier/core/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace atelier::kernels {

namespace {
constexpr int64_t kParallelCutoff = 16384;  // flops below this run serial
constexpr int64_t kChunk = 4096;            // reduction chunk, fixed

inline bool go_parallel(int64_t work) {
  return work >= kParallelCutoff && !omp_in_parallel();
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double gelu_one(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
inline double gelu_grad_one(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline void matmul_row(const double* a, const double* b, double* c, int64_t i, int64_t k,
                       int64_t n) {
  double* crow = c + i * n;
  const double* arow = a + i * k;
  for (int64_t kk = 0; kk < k; ++kk) {
    const double av = arow[kk];
    const double* brow = b + kk * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void matmul_nt_row(const double* a, const double* b, double* c, int64_t i, int64_t k,
                          int64_t n) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (int64_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double acc = 0.0;
    for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
    crow[j] += acc;
  }
}

inline void matmul_tn_row(const double* a, const double* b, double* c, int64_t i, int64_t k,
                          int64_t m, int64_t n) {
  // a is [k,m], we produce row i of c[m,n]
  double* crow = c + i * n;
  for (int64_t kk = 0; kk < k; ++kk) {
    const double av = a[kk * m + i];
    const double* brow = b + kk * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void softmax_row(const double* x, double* y, int64_t cols) {
  double mx = x[0];
  for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int64_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline double sum_span(const double* x, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}

inline double reduce_sum_chunked(const double* x, int64_t n, bool parallel) {
  if (n <= kChunk) return sum_span(x, n);
  const int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<size_t>(nchunks));
#pragma omp parallel for schedule(static) if (parallel)
  for (int64_t c = 0; c < nchunks; ++c) {
    const int64_t lo = c * kChunk;
    partial[static_cast<size_t>(c)] = sum_span(x + lo, std::min(kChunk, n - lo));
  }
  double s = 0.0;
  for (int64_t c = 0; c < nchunks; ++c) s += partial[static_cast<size_t>(c)];
  return s;
}
}  // namespace

void fill(double* x, int64_t n, double v) {
#pragma omp parallel for schedule(static) if (go_parallel(n))
  for (int64_t i = 0; i < n; ++i) x[i] = v;
}

void add(const double* a, const double* b, double* c, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(n))
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* c, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(n))
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* c, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(n))
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void scale(const double* x, double* y, double alpha, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(n))
  for (int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(n))
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_acc(const double* a, const double* b, double* c, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(n))
  for (int64_t i = 0; i < n; ++i) c[i] += a[i] * b[i];
}

void gelu(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(8 * n))
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_grad(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(8 * n))
  for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_one(x[i]);
}

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  fill(c, m * n, 0.0);
  matmul_acc(a, b, c, m, k, n);
}

void matmul_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  fill(c, m * n, 0.0);
  matmul_nt_acc(a, b, c, m, k, n);
}

void matmul_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  fill(c, m * n, 0.0);
  matmul_tn_acc(a, b, c, m, k, n);
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (int64_t i = 0; i < m; ++i) matmul_tn_row(a, b, c, i, k, m, n);
}

double reduce_sum(const double* x, int64_t n) { return reduce_sum_chunked(x, n, go_parallel(n)); }

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static) if (go_parallel(rows* cols * 4))
  for (int64_t i = 0; i < rows; ++i) softmax_row(x + i * cols, y + i * cols, cols);
}

namespace ref {

void fill(double* x, int64_t n, double v) {
  for (int64_t i = 0; i < n; ++i) x[i] = v;
}
void add(const double* a, const double* b, double* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}
void sub(const double* a, const double* b, double* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}
void mul(const double* a, const double* b, double* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}
void scale(const double* x, double* y, double alpha, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}
void axpy(double alpha, const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
void mul_acc(const double* a, const double* b, double* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] += a[i] * b[i];
}
void gelu(const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}
void gelu_grad(const double* x, const double* dy, double* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_one(x[i]);
}
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  fill(c, m * n, 0.0);
  matmul_acc(a, b, c, m, k, n);
}
void matmul_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  fill(c, m * n, 0.0);
  matmul_nt_acc(a, b, c, m, k, n);
}
void matmul_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n);
}
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  fill(c, m * n, 0.0);
  matmul_tn_acc(a, b, c, m, k, n);
}
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_tn_row(a, b, c, i, k, m, n);
}
double reduce_sum(const double* x, int64_t n) { return reduce_sum_chunked(x, n, false); }
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i) softmax_row(x + i * cols, y + i * cols, cols);
}

}  // namespace ref

}  // namespace atelier::kernels

#pragma once

#include <cstdint>

// Dense double-precision kernels. The default entry points parallelize with
// OpenMP; atelier::kernels::ref holds plain serial mirrors kept for testing
// and benchmarking.
//
// Determinism contract: every output element is produced by exactly one loop
// iteration whose inner accumulation order is fixed, and scalar reductions
// accumulate per 4096-element chunk and then fold the chunk partials in index
// order. The serial mirrors share the same per-element order, so parallel and
// serial results are bit-identical for any thread count.

namespace atelier::kernels {

void fill(double* x, int64_t n, double v);
void add(const double* a, const double* b, double* c, int64_t n);
void sub(const double* a, const double* b, double* c, int64_t n);
void mul(const double* a, const double* b, double* c, int64_t n);
void scale(const double* x, double* y, double alpha, int64_t n);
void axpy(double alpha, const double* x, double* y, int64_t n);  // y += alpha*x
void mul_acc(const double* a, const double* b, double* c, int64_t n);  // c += a.*b

void gelu(const double* x, double* y, int64_t n);
void gelu_grad(const double* x, const double* dy, double* dx, int64_t n);  // dx += dy*gelu'(x)

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// c[m,n] = a[m,k] * b[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// c[m,n] = a[k,m]^T * b[k,n]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

double reduce_sum(const double* x, int64_t n);

// Row-wise shifted softmax; y may alias x.
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);

namespace ref {
void fill(double* x, int64_t n, double v);
void add(const double* a, const double* b, double* c, int64_t n);
void sub(const double* a, const double* b, double* c, int64_t n);
void mul(const double* a, const double* b, double* c, int64_t n);
void scale(const double* x, double* y, double alpha, int64_t n);
void axpy(double alpha, const double* x, double* y, int64_t n);
void mul_acc(const double* a, const double* b, double* c, int64_t n);
void gelu(const double* x, double* y, int64_t n);
void gelu_grad(const double* x, const double* dy, double* dx, int64_t n);
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
double reduce_sum(const double* x, int64_t n);
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
}  // namespace ref

}  // namespace atelier::kernels

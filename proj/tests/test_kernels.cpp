#include <doctest.h>

#include <vector>

#include "atelier/core/kernels.hpp"
#include "atelier/core/rng.hpp"

using namespace atelier;

namespace {
std::vector<double> rand_vec(int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}
}  // namespace

// The OpenMP kernels must match the serial reference bit-for-bit: each output
// element has a fixed accumulation order regardless of thread count.
TEST_CASE("parallel kernels match serial reference exactly") {
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    const int64_t m = rng.uniform_int(1, 70);
    const int64_t k = rng.uniform_int(1, 70);
    const int64_t n = rng.uniform_int(1, 70);
    auto a = rand_vec(m * k, rng);
    auto b = rand_vec(k * n, rng);
    std::vector<double> c1(static_cast<size_t>(m * n)), c2(c1);

    kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
    kernels::ref::matmul(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(c1 == c2);

    auto bt = rand_vec(n * k, rng);
    kernels::matmul_nt(a.data(), bt.data(), c1.data(), m, k, n);
    kernels::ref::matmul_nt(a.data(), bt.data(), c2.data(), m, k, n);
    CHECK(c1 == c2);

    auto at = rand_vec(k * m, rng);
    kernels::matmul_tn(at.data(), b.data(), c1.data(), m, k, n);
    kernels::ref::matmul_tn(at.data(), b.data(), c2.data(), m, k, n);
    CHECK(c1 == c2);
  }
}

TEST_CASE("elementwise kernels match serial reference exactly") {
  Rng rng(321);
  const int64_t n = 40000;  // above the parallel cutoff
  auto a = rand_vec(n, rng);
  auto b = rand_vec(n, rng);
  std::vector<double> c1(static_cast<size_t>(n)), c2(c1);

  kernels::add(a.data(), b.data(), c1.data(), n);
  kernels::ref::add(a.data(), b.data(), c2.data(), n);
  CHECK(c1 == c2);

  kernels::mul(a.data(), b.data(), c1.data(), n);
  kernels::ref::mul(a.data(), b.data(), c2.data(), n);
  CHECK(c1 == c2);

  kernels::gelu(a.data(), c1.data(), n);
  kernels::ref::gelu(a.data(), c2.data(), n);
  CHECK(c1 == c2);

  std::vector<double> d1(c1), d2(c1);
  kernels::gelu_grad(a.data(), b.data(), d1.data(), n);
  kernels::ref::gelu_grad(a.data(), b.data(), d2.data(), n);
  CHECK(d1 == d2);
}

TEST_CASE("chunked reduction is order-fixed") {
  Rng rng(99);
  const int64_t n = 3 * 4096 + 577;  // straddles chunk boundaries
  auto x = rand_vec(n, rng);
  CHECK(kernels::reduce_sum(x.data(), n) == kernels::ref::reduce_sum(x.data(), n));
  // and for a short vector (single chunk)
  CHECK(kernels::reduce_sum(x.data(), 100) == kernels::ref::reduce_sum(x.data(), 100));
}

TEST_CASE("softmax kernel matches reference and normalizes") {
  Rng rng(4);
  const int64_t rows = 300, cols = 64;
  auto x = rand_vec(rows * cols, rng);
  std::vector<double> y1(static_cast<size_t>(rows * cols)), y2(y1);
  kernels::softmax_rows(x.data(), y1.data(), rows, cols);
  kernels::ref::softmax_rows(x.data(), y2.data(), rows, cols);
  CHECK(y1 == y2);
  for (int64_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < cols; ++j) s += y1[static_cast<size_t>(i * cols + j)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

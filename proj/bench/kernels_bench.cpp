// Compares the serial reference kernels against the OpenMP versions and
// reports throughput for the shapes the training loops actually hit.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "atelier/core/kernels.hpp"
#include "atelier/core/rng.hpp"
#include "atelier/core/threads.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

std::vector<double> random_vec(int64_t n, atelier::Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void bench_matmul(int64_t m, int64_t k, int64_t n, int reps, atelier::Rng& rng) {
  auto a = random_vec(m * k, rng);
  auto b = random_vec(k * n, rng);
  std::vector<double> c(static_cast<size_t>(m * n));
  const double flops = 2.0 * static_cast<double>(m) * static_cast<double>(k) * static_cast<double>(n);
  const double ts = time_of([&] { atelier::kernels::ref::matmul(a.data(), b.data(), c.data(), m, k, n); }, reps);
  const double tp = time_of([&] { atelier::kernels::matmul(a.data(), b.data(), c.data(), m, k, n); }, reps);
  std::printf("matmul %4lldx%4lldx%4lld   serial %8.2f ms (%6.2f GF/s)   omp %8.2f ms (%6.2f GF/s)   speedup %.2fx\n",
              static_cast<long long>(m), static_cast<long long>(k), static_cast<long long>(n),
              ts * 1e3, flops / ts * 1e-9, tp * 1e3, flops / tp * 1e-9, ts / tp);
}

void bench_softmax(int64_t rows, int64_t cols, int reps, atelier::Rng& rng) {
  auto x = random_vec(rows * cols, rng);
  std::vector<double> y(static_cast<size_t>(rows * cols));
  const double ts = time_of([&] { atelier::kernels::ref::softmax_rows(x.data(), y.data(), rows, cols); }, reps);
  const double tp = time_of([&] { atelier::kernels::softmax_rows(x.data(), y.data(), rows, cols); }, reps);
  std::printf("softmax %5lldx%4lld      serial %8.2f ms              omp %8.2f ms              speedup %.2fx\n",
              static_cast<long long>(rows), static_cast<long long>(cols), ts * 1e3, tp * 1e3, ts / tp);
}

void bench_reduce(int64_t n, int reps, atelier::Rng& rng) {
  auto x = random_vec(n, rng);
  volatile double sink = 0.0;
  const double ts = time_of([&] { sink = atelier::kernels::ref::reduce_sum(x.data(), n); }, reps);
  const double tp = time_of([&] { sink = atelier::kernels::reduce_sum(x.data(), n); }, reps);
  (void)sink;
  std::printf("reduce_sum n=%-9lld serial %8.2f ms              omp %8.2f ms              speedup %.2fx\n",
              static_cast<long long>(n), ts * 1e3, tp * 1e3, ts / tp);
}

void bench_gelu(int64_t n, int reps, atelier::Rng& rng) {
  auto x = random_vec(n, rng);
  std::vector<double> y(static_cast<size_t>(n));
  const double ts = time_of([&] { atelier::kernels::ref::gelu(x.data(), y.data(), n); }, reps);
  const double tp = time_of([&] { atelier::kernels::gelu(x.data(), y.data(), n); }, reps);
  std::printf("gelu n=%-9lld       serial %8.2f ms              omp %8.2f ms              speedup %.2fx\n",
              static_cast<long long>(n), ts * 1e3, tp * 1e3, ts / tp);
}

}  // namespace

int main() {
  const int threads = atelier::apply_thread_cap();
  std::printf("kernels benchmark, %d OpenMP thread(s)\n\n", threads);
  atelier::Rng rng(7);

  bench_matmul(128, 128, 128, 50, rng);
  bench_matmul(256, 256, 256, 10, rng);
  bench_matmul(512, 512, 512, 3, rng);
  bench_matmul(960, 128, 512, 5, rng);  // stage-2 fc shape
  bench_softmax(4096, 128, 50, rng);
  bench_reduce(1 << 20, 50, rng);
  bench_gelu(1 << 20, 20, rng);
  return 0;
}

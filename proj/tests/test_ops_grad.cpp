#include <doctest.h>

#include <cmath>
#include <vector>

#include "atelier/core/fdcheck.hpp"
#include "atelier/core/ops.hpp"
#include "atelier/core/rng.hpp"
#include "atelier/core/tensor.hpp"

using namespace atelier;

namespace {

Tensor rand_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::param(std::move(shape), std::move(v));
}

Tensor rand_const(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Reduces any op output to a scalar with fixed random weights so the
// finite-difference probe sees a non-degenerate objective.
Tensor weighted(const Tensor& y, const Tensor& w) { return mean(mul(y, w)); }

}  // namespace

TEST_CASE("matmul identity and hand-summed products") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor v = Tensor::from({2, 1}, {3.5, -1.25});
  Tensor out = matmul(eye, v);
  CHECK(out.at(0) == 3.5);
  CHECK(out.at(1) == -1.25);

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor ones = Tensor::from({2, 1}, {1, 1});
  Tensor p = matmul(a, ones);
  CHECK(p.at(0) == 3.0);
  CHECK(p.at(1) == 7.0);

  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = rand_param({5, 4}, rng);
  Tensor b = rand_param({4, 3}, rng);
  Tensor w = rand_const({5, 3}, rng);
  double err = fd_check_params([&] { return weighted(matmul(a, b), w); }, {a, b});
  CHECK(err <= 1e-6);
}

TEST_CASE("softmax examples and row normalization") {
  Tensor s = softmax_rows(Tensor::from({1, 2}, {0, 0}));
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  Tensor t = softmax_rows(Tensor::from({1, 2}, {1, 0}));
  CHECK(t.at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(t.at(1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));

  Tensor one = softmax_rows(Tensor::from({1, 1}, {42.0}));
  CHECK(one.at(0) == 1.0);

  // shift invariance comes from internal max subtraction
  Tensor big = softmax_rows(Tensor::from({1, 3}, {1000.0, 1000.0, 1000.0}));
  for (int j = 0; j < 3; ++j) CHECK(big.at(j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rand_const({4, 7}, rng, -30, 30);
    Tensor y = softmax_rows(x);
    for (int64_t i = 0; i < 4; ++i) {
      double rowsum = 0;
      for (int64_t j = 0; j < 7; ++j) rowsum += y.at(i, j);
      CHECK(std::abs(rowsum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("softmax gradient") {
  Rng rng(6);
  Tensor x = rand_param({3, 5}, rng);
  Tensor w = rand_const({3, 5}, rng);
  double err = fd_check_params([&] { return weighted(softmax_rows(x), w); }, {x});
  CHECK(err <= 1e-4);
}

TEST_CASE("cross entropy: uniform, saturated, brute force") {
  Tensor uniform = Tensor::zeros({1, 2});
  Tensor l = cross_entropy_with_logits(uniform, {0});
  CHECK(l.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor margin = Tensor::from({1, 4}, {30, 0, 0, 0});
  CHECK(cross_entropy_with_logits(margin, {0}).item() < 1e-12);

  Rng rng(8);
  Tensor logits = rand_const({3, 5}, rng, -3, 3);
  std::vector<int64_t> targets = {4, 0, 2};
  const double got = cross_entropy_with_logits(logits, targets).item();
  double expect = 0;
  for (int64_t i = 0; i < 3; ++i) {
    double denom = 0;
    for (int64_t j = 0; j < 5; ++j) denom += std::exp(logits.at(i, j));
    expect += -std::log(std::exp(logits.at(i, targets[static_cast<size_t>(i)])) / denom);
  }
  expect /= 3.0;
  CHECK(std::abs(got - expect) / std::abs(expect) <= 1e-9);

  CHECK_THROWS_AS(cross_entropy_with_logits(logits, {0, 1, 5}), ContractError);

  // nonnegativity property
  for (int trial = 0; trial < 50; ++trial) {
    Tensor r = rand_const({2, 6}, rng, -20, 20);
    CHECK(cross_entropy_with_logits(r, {trial % 6, (trial * 3) % 6}).item() >= 0.0);
  }
}

TEST_CASE("cross entropy gradient is (softmax - onehot)/n") {
  Rng rng(9);
  Tensor logits = rand_param({4, 6}, rng);
  std::vector<int64_t> targets = {1, 5, 0, 3};
  double err =
      fd_check_params([&] { return cross_entropy_with_logits(logits, targets); }, {logits});
  CHECK(err <= 1e-6);
}

TEST_CASE("layer norm degenerate and hand cases") {
  Tensor gain = Tensor::from({4}, {1, 1, 1, 1});
  Tensor bias = Tensor::zeros({4});
  Tensor c = layer_norm(Tensor::full({1, 4}, 3.25), gain, bias);
  for (int j = 0; j < 4; ++j) CHECK(c.at(j) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor g2 = Tensor::from({2}, {1, 1});
  Tensor b2 = Tensor::zeros({2});
  Tensor n = layer_norm(Tensor::from({1, 2}, {1, -1}), g2, b2);
  CHECK(n.at(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(n.at(1) == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("layer norm gradient") {
  Rng rng(10);
  Tensor x = rand_param({3, 6}, rng);
  Tensor gain = rand_param({6}, rng, 0.5, 1.5);
  Tensor bias = rand_param({6}, rng, -0.2, 0.2);
  Tensor w = rand_const({3, 6}, rng);
  double err = fd_check_params([&] { return weighted(layer_norm(x, gain, bias), w); },
                               {x, gain, bias});
  CHECK(err <= 1e-5);
}

TEST_CASE("l2 normalize: hand case, idempotence, scale invariance, zeros") {
  Tensor v = l2_normalize_rows(Tensor::from({1, 2}, {3, 4}));
  CHECK(v.at(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(v.at(1) == doctest::Approx(0.8).epsilon(1e-15));

  Tensor again = l2_normalize_rows(v);
  CHECK(again.at(0) == doctest::Approx(v.at(0)).epsilon(1e-12));
  CHECK(again.at(1) == doctest::Approx(v.at(1)).epsilon(1e-12));

  Rng rng(12);
  Tensor x = rand_const({1, 5}, rng);
  Tensor y1 = l2_normalize_rows(x);
  Tensor y2 = l2_normalize_rows(scale(x, 37.5));
  for (int j = 0; j < 5; ++j) CHECK(y1.at(j) == doctest::Approx(y2.at(j)).epsilon(1e-12));

  Tensor z = l2_normalize_rows(Tensor::zeros({1, 3}));
  for (int j = 0; j < 3; ++j) CHECK(z.at(j) == 0.0);
}

TEST_CASE("l2 normalize gradient") {
  Rng rng(13);
  Tensor x = rand_param({4, 5}, rng, 0.2, 1.0);
  Tensor w = rand_const({4, 5}, rng);
  double err = fd_check_params([&] { return weighted(l2_normalize_rows(x), w); }, {x});
  CHECK(err <= 1e-5);
}

TEST_CASE("remaining op gradients vs finite differences") {
  Rng rng(14);
  Tensor a = rand_param({3, 4}, rng);
  Tensor b = rand_param({3, 4}, rng);
  Tensor w = rand_const({3, 4}, rng);

  CHECK(fd_check_params([&] { return weighted(add(a, b), w); }, {a, b}) <= 1e-6);
  CHECK(fd_check_params([&] { return weighted(sub(a, b), w); }, {a, b}) <= 1e-6);
  CHECK(fd_check_params([&] { return weighted(mul(a, b), w); }, {a, b}) <= 1e-5);
  CHECK(fd_check_params([&] { return weighted(scale(a, -2.5), w); }, {a}) <= 1e-6);
  CHECK(fd_check_params([&] { return weighted(gelu(a), w); }, {a}) <= 1e-5);
  CHECK(fd_check_params([&] { return mse(a, b); }, {a, b}) <= 1e-5);

  Tensor bt = rand_param({5, 4}, rng);
  Tensor wnt = rand_const({3, 5}, rng);
  CHECK(fd_check_params([&] { return weighted(matmul_nt(a, bt), wnt); }, {a, bt}) <= 1e-6);

  Tensor vrow = rand_param({4}, rng);
  CHECK(fd_check_params([&] { return weighted(add_rowvec(a, vrow), w); }, {a, vrow}) <= 1e-6);

  Tensor wr = rand_const({2, 4}, rng);
  CHECK(fd_check_params([&] { return weighted(slice_rows(a, 1, 3), wr); }, {a}) <= 1e-6);
  Tensor wc = rand_const({3, 2}, rng);
  CHECK(fd_check_params([&] { return weighted(slice_cols(a, 1, 3), wc); }, {a}) <= 1e-6);

  Tensor wcat = rand_const({6, 4}, rng);
  CHECK(fd_check_params([&] { return weighted(concat_rows({a, b}), wcat); }, {a, b}) <= 1e-6);
  Tensor wcatc = rand_const({3, 8}, rng);
  CHECK(fd_check_params([&] { return weighted(concat_cols({a, b}), wcatc); }, {a, b}) <= 1e-6);

  Tensor table = rand_param({6, 3}, rng);
  Tensor wemb = rand_const({4, 3}, rng);
  std::vector<int64_t> ids = {0, 5, 2, 5};
  CHECK(fd_check_params([&] { return weighted(embed_rows(table, ids), wemb); }, {table}) <= 1e-5);

  Tensor wmax = rand_const({3}, rng);
  CHECK(fd_check_params([&] { return weighted(max_rows(a), wmax); }, {a}) <= 1e-5);

  auto plan = GatherPlan::make({2, 6}, {0, 1, 2, -1, 4, 5, 6, 7, 8, 9, 10, 0}, 12);
  Tensor wg = rand_const({2, 6}, rng);
  CHECK(fd_check_params([&] { return weighted(gather(a, plan), wg); }, {a}) <= 1e-6);

  Tensor wre = rand_const({4, 3}, rng);
  CHECK(fd_check_params([&] { return weighted(reshape(a, {4, 3}), wre); }, {a}) <= 1e-6);

  Tensor s1 = rand_param({1}, rng);
  Tensor s2 = rand_param({1}, rng);
  Tensor ws = rand_const({1, 2}, rng);
  CHECK(fd_check_params([&] { return weighted(stack_scalars({s1, s2}, 1, 2), ws); }, {s1, s2}) <=
        1e-6);
}

TEST_CASE("max_rows breaks ties toward the lowest index") {
  std::vector<int64_t> idx;
  Tensor x = Tensor::from({2, 3}, {1, 5, 5, 7, 7, 7});
  Tensor m = max_rows(x, &idx);
  CHECK(m.at(0) == 5.0);
  CHECK(m.at(1) == 7.0);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 0);
}

TEST_CASE("detach blocks gradients") {
  Tape::active().clear();
  Tensor x = Tensor::param({2}, {1, 2});
  Tensor y = sum(detach(scale(x, 3.0)));
  CHECK_THROWS_AS(Tape::active().backward(y), ContractError);  // no grad path
  Tape::active().clear();
}

TEST_CASE("finite_difference_check on a quadratic is exact to roundoff") {
  Tensor theta = Tensor::from({3}, {0.7, -1.2, 2.0});
  std::vector<double> coef = {1.5, 2.0, -0.75};
  auto f = [&] {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += coef[static_cast<size_t>(i)] * theta.at(i) * theta.at(i) + theta.at(i);
    return s;
  };
  std::vector<double> analytic(3);
  for (int i = 0; i < 3; ++i) analytic[static_cast<size_t>(i)] = 2 * coef[static_cast<size_t>(i)] * theta.at(i) + 1.0;
  CHECK(finite_difference_check(f, theta, analytic) <= 1e-8);
}

TEST_CASE("finite_difference_check flags a corrupted gradient") {
  Tensor theta = Tensor::from({3}, {0.9, -1.1, 1.7});
  auto f = [&] {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += theta.at(i) * theta.at(i);
    return s;
  };
  std::vector<double> corrupted(3);
  for (int i = 0; i < 3; ++i) corrupted[static_cast<size_t>(i)] = 2.0 * theta.at(i) * 1.01;
  CHECK(finite_difference_check(f, theta, corrupted) >= 5e-3);
}

TEST_CASE("finite_difference_check rejects nondeterministic objectives") {
  Tensor theta = Tensor::from({1}, {1.0});
  int calls = 0;
  auto f = [&] { return static_cast<double>(++calls); };
  CHECK_THROWS_AS(finite_difference_check(f, theta, {0.0}), ContractError);
}

#include <doctest.h>

#include "atelier/core/ops.hpp"
#include "atelier/core/tensor.hpp"

using namespace atelier;

TEST_CASE("shape/value invariants") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);
}

TEST_CASE("backward on sum gives all-ones gradient") {
  Tape::active().clear();
  Tensor x = Tensor::param({4}, {1, 2, 3, 4});
  Tensor loss = sum(x);
  Tape::active().backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == 1.0);
  Tape::active().clear();
}

TEST_CASE("backward on dot-square gives 2x") {
  Tape::active().clear();
  Tensor x = Tensor::param({1, 3}, {1.5, -2.0, 0.5});
  Tensor loss = sum(mul(x, x));
  Tape::active().backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
  CHECK(x.grad()[2] == doctest::Approx(1.0));
  Tape::active().clear();
}

TEST_CASE("gradients accumulate additively until zeroed") {
  Tape::active().clear();
  Tensor x = Tensor::param({2}, {1, 1});
  Tensor l1 = sum(x);
  Tape::active().backward(l1);
  Tape::active().clear();
  Tensor l2 = sum(x);
  Tape::active().backward(l2);
  Tape::active().clear();
  CHECK(x.grad()[0] == 2.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("clearing the tape leaves parameter values intact") {
  Tape::active().clear();
  Tensor x = Tensor::param({2}, {5, 7});
  Tensor y = scale(x, 2.0);
  (void)y;
  Tape::active().clear();
  CHECK(x.at(0) == 5.0);
  CHECK(x.at(1) == 7.0);
}

TEST_CASE("backward rejects non-scalar and disconnected losses") {
  Tape::active().clear();
  Tensor x = Tensor::param({2, 2}, {1, 2, 3, 4});
  Tensor y = scale(x, 2.0);
  CHECK_THROWS_AS(Tape::active().backward(y), ContractError);
  Tensor c = Tensor::scalar(1.0);  // constant: no grad path
  CHECK_THROWS_AS(Tape::active().backward(c), ContractError);
  Tape::active().clear();
}

TEST_CASE("NoGradGuard suppresses recording") {
  Tape::active().clear();
  Tensor x = Tensor::param({2}, {1, 2});
  {
    NoGradGuard ng;
    Tensor y = scale(x, 3.0);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(Tape::active().size() == 0);
}

TEST_CASE("identical inputs give bit-identical forward and backward") {
  auto run = [] {
    Tape::active().clear();
    Tensor a = Tensor::param({3, 3}, {0.3, -1, 2, 0.5, 0.25, -0.125, 1, 2, 3});
    Tensor b = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor loss = mean(mul(matmul(a, b), a));
    Tape::active().backward(loss);
    std::vector<double> out = {loss.item()};
    out.insert(out.end(), a.grad_values().begin(), a.grad_values().end());
    Tape::active().clear();
    return out;
  };
  CHECK(run() == run());
}

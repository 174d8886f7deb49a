#include "atelier/core/tensor.hpp"

#include <cmath>
#include <sstream>

namespace atelier {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  auto n = std::make_shared<TensorNode>();
  int64_t count = numel(shape);
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(count), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  for (double& x : t.n_->value) x = v;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  int64_t count = numel(shape);
  if (count != static_cast<int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.enable_grad();
  return t;
}

void Tensor::enable_grad() {
  if (!n_->requires_grad) {
    n_->requires_grad = true;
    n_->grad.assign(n_->value.size(), 0.0);
  }
}

void Tensor::zero_grad() {
  for (double& g : n_->grad) g = 0.0;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return n_->value[0];
}

bool Tensor::all_finite() const {
  for (double v : n_->value)
    if (!std::isfinite(v)) return false;
  return true;
}

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad())
    throw ContractError("backward: loss is not connected to any gradient-carrying tensor");
  loss.node()->grad[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

void check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite())
    throw ContractError(std::string(where) + ": non-finite value encountered");
}

}  // namespace atelier

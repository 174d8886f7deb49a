#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace atelier {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value iff requires_grad
  bool requires_grad = false;
};

// Value-semantics handle onto a node in the differentiation graph. Copies
// share the underlying buffer; ops allocate fresh nodes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);
  // Trainable leaf: requires_grad with a zeroed gradient buffer.
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  int64_t dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(n_->value.size()); }

  double* data() { return n_->value.data(); }
  const double* data() const { return n_->value.data(); }
  std::vector<double>& values() { return n_->value; }
  const std::vector<double>& values() const { return n_->value; }

  bool requires_grad() const { return n_->requires_grad; }
  // Marks the tensor as gradient-carrying and allocates a zero grad buffer.
  void enable_grad();
  double* grad() { return n_->grad.data(); }
  const double* grad() const { return n_->grad.data(); }
  std::vector<double>& grad_values() { return n_->grad; }
  void zero_grad();

  double item() const;
  double at(int64_t i) const { return n_->value[static_cast<size_t>(i)]; }
  double at(int64_t r, int64_t c) const {
    return n_->value[static_cast<size_t>(r * dim(1) + c)];
  }
  void set(int64_t i, double v) { n_->value[static_cast<size_t>(i)] = v; }

  bool all_finite() const;

  std::shared_ptr<TensorNode> node() const { return n_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}
  std::shared_ptr<TensorNode> n_;
};

// Reverse-mode tape. Forward ops append backward steps in execution order,
// which is a topological order of the graph; backward() replays the steps in
// exact reverse. clear() drops recorded steps and intermediate buffers but
// leaves every parameter's value and gradient untouched.
class Tape {
 public:
  static Tape& active();  // thread-local instance

  bool recording() const { return enabled_; }
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  void backward(const Tensor& loss);
  void clear() { steps_.clear(); }
  size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
  bool enabled_ = true;
  friend class NoGradGuard;
};

// Disables tape recording for its scope (inference / finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape::active().enabled_) { Tape::active().enabled_ = false; }
  ~NoGradGuard() { Tape::active().enabled_ = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

void check_finite(const Tensor& t, const char* where);

}  // namespace atelier

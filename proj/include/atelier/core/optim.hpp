#pragma once

#include <vector>

#include "atelier/core/tensor.hpp"

namespace atelier {

// Adam with decoupled weight decay. Parameters are updated in registration
// order with plain serial loops, so training is bit-reproducible.
class AdamW {
 public:
  struct Options {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(std::vector<Tensor> params, Options opts);

  void step(double lr_override = -1.0);
  void zero_grad();
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  Options opts_;
  int64_t t_ = 0;
};

// Cosine schedule from base_lr down to floor_ratio*base_lr over total steps.
double cosine_lr(int64_t step, int64_t total_steps, double base_lr, double floor_ratio = 0.1);

}  // namespace atelier

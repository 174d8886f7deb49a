#include "atelier/core/optim.hpp"

#include <cmath>

namespace atelier {

AdamW::AdamW(std::vector<Tensor> params, Options opts) : params_(std::move(params)), opts_(opts) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.requires_grad()) throw ContractError("AdamW: parameter without gradient buffer");
    m_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
}

void AdamW::step(double lr_override) {
  const double lr = lr_override > 0 ? lr_override : opts_.lr;
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    double* w = p.data();
    const double* g = p.grad();
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    const int64_t n = p.size();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + opts_.eps) + opts_.weight_decay * w[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double cosine_lr(int64_t step, int64_t total_steps, double base_lr, double floor_ratio) {
  if (total_steps <= 1) return base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  const double floor = base_lr * floor_ratio;
  return floor + 0.5 * (base_lr - floor) * (1.0 + std::cos(3.14159265358979323846 * t));
}

}  // namespace atelier

#include "atelier/core/fdcheck.hpp"

#include <cmath>

namespace atelier {

double finite_difference_check(const std::function<double()>& eval, Tensor theta,
                               const std::vector<double>& analytic, double h) {
  if (h <= 0) throw ContractError("finite_difference_check: h must be positive");
  if (static_cast<int64_t>(analytic.size()) != theta.size())
    throw ContractError("finite_difference_check: gradient length mismatch");
  {
    NoGradGuard ng;
    const double a = eval();
    const double b = eval();
    if (a != b)
      throw ContractError("finite_difference_check: objective is not deterministic (" +
                          std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
  double worst = 0.0;
  for (int64_t i = 0; i < theta.size(); ++i) {
    const double saved = theta.at(i);
    double plus, minus;
    {
      NoGradGuard ng;
      theta.set(i, saved + h);
      plus = eval();
      theta.set(i, saved - h);
      minus = eval();
      theta.set(i, saved);
    }
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic[static_cast<size_t>(i)];
    const double rel = std::abs(a - numeric) / (std::abs(a) + 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

double fd_check_params(const std::function<Tensor()>& build_loss, std::vector<Tensor> params,
                       double h) {
  Tape& tape = Tape::active();
  tape.clear();
  for (Tensor& p : params) p.zero_grad();
  Tensor loss = build_loss();
  tape.backward(loss);
  tape.clear();

  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (Tensor& p : params) grads.push_back(p.grad_values());

  auto eval = [&]() { return build_loss().item(); };
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi)
    worst = std::max(worst, finite_difference_check(eval, params[pi], grads[pi], h));
  return worst;
}

}  // namespace atelier

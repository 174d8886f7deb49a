#pragma once

#include <functional>
#include <vector>

#include "atelier/core/tensor.hpp"

namespace atelier {

// Central finite-difference gradient verification.
//
// `eval` recomputes the scalar objective from current parameter values (it is
// run under NoGrad and must be deterministic — this is checked by evaluating
// twice up front). `theta` is perturbed coordinate-by-coordinate; `analytic`
// is the gradient to verify, matching theta's layout.
//
// Returns max over coordinates of
//   |analytic_i - (f(theta + h e_i) - f(theta - h e_i)) / 2h| / (|analytic_i| + 1e-8).
double finite_difference_check(const std::function<double()>& eval, Tensor theta,
                               const std::vector<double>& analytic, double h = 1e-5);

// Convenience driver: builds the loss once to obtain analytic gradients for
// every parameter, then finite-difference checks each parameter tensor.
// `build_loss` must construct the loss from scratch on the active tape.
// Returns the max relative error across all parameters.
double fd_check_params(const std::function<Tensor()>& build_loss, std::vector<Tensor> params,
                       double h = 1e-5);

}  // namespace atelier

#pragma once

#include "apf/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace apf {

struct GradcheckResult {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)
  std::size_t entries = 0;
  bool passed = false;
};

/// Central differences of `loss` with respect to every entry of `target`.
Matrix numeric_gradient(const std::function<double()>& loss, Matrix& target, double h = 1e-5);

double relative_error(const Matrix& analytic, const Matrix& numeric);

/// Checks every parameter in `params`: `loss_and_grad` must zero nothing,
/// evaluate the loss and leave analytic gradients in the params.
GradcheckResult check_params(const std::string& name, const ParamRefs& params,
                             const std::function<double()>& loss_and_grad,
                             double tol = 1e-4, double h = 1e-5);

/// Every differentiable primitive plus both training objectives on small
/// random instances.
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, double tol = 1e-4);

}  // namespace apf

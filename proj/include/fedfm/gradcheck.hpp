#pragma once

#include <functional>

#include "fedfm/matrix.hpp"
#include "fedfm/mlp.hpp"

namespace fedfm {

// Central finite differences with eps 1e-5. Relative error uses
// max(1, |analytic|, |numeric|) as the denominator.

constexpr double kFdEps = 1e-5;

double relative_error(double analytic, double numeric);

/// Max relative error between an analytic gradient w.r.t. a matrix input and
/// central differences of `loss_of` around `point`. The callback must not
/// depend on the analytic path under test.
double fd_check_matrix(const std::function<double(const Matrix&)>& loss_of, const Matrix& point,
                       const Matrix& analytic_grad);

/// Same, perturbing every weight and bias of a parameter set.
double fd_check_params(const std::function<double(const MlpParams&)>& loss_of,
                       const MlpParams& point, const ParamGrads& analytic_grad);

}  // namespace fedfm

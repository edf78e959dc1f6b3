#pragma once

#include <functional>
#include <vector>

#include "maepde/numkit/autograd.hpp"

namespace maepde::numkit {

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8)
/// for a scalar function of x.
double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h = 1e-5);

/// Same measure over every entry of `params`, with `loss` rebuilding the graph
/// from the current parameter values on each call.
double grad_check_params(const std::function<Var()>& loss, const std::vector<Parameter*>& params, double h = 1e-5);

}  // namespace maepde::numkit

#include "maepde/numkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maepde::numkit {
namespace {

double eval(const std::function<Var()>& f) {
  NoGradGuard guard;
  const double v = f().value().item();
  if (!std::isfinite(v)) throw NumkitError("grad_check: non-finite function value at a probe point");
  return v;
}

double compare(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
}

}  // namespace

double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h) {
  Var xv(x, true);
  Var y = f(xv);
  if (y.value().size() != 1) throw NumkitError("grad_check: function must return a single element");
  if (!std::isfinite(y.value().item())) throw NumkitError("grad_check: non-finite function value");
  y.backward();
  const Tensor analytic = xv.grad().shape() == x.shape() ? xv.grad() : Tensor(x.shape());

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = eval([&] { return f(Var(probe)); });
    probe[i] = x[i] - h;
    const double fm = eval([&] { return f(Var(probe)); });
    probe[i] = x[i];
    worst = std::max(worst, compare(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

double grad_check_params(const std::function<Var()>& loss, const std::vector<Parameter*>& params, double h) {
  for (auto* p : params) p->zero_grad();
  Var y = loss();
  if (!std::isfinite(y.value().item())) throw NumkitError("grad_check: non-finite function value");
  y.backward();
  double worst = 0.0;
  for (auto* p : params) {
    const Tensor analytic = p->grad();
    auto& w = p->value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double w0 = w[i];
      w[i] = w0 + h;
      const double fp = eval(loss);
      w[i] = w0 - h;
      const double fm = eval(loss);
      w[i] = w0;
      worst = std::max(worst, compare(analytic[i], (fp - fm) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace maepde::numkit

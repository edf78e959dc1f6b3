#include "maepde/numkit/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace maepde::numkit {

void adamw_step(const std::vector<Parameter*>& params, AdamWState& state, double lr, const AdamWConfig& cfg) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw NumkitError("adamw_step: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable()) continue;
    if (state.m[i].shape() != params[i]->shape()) throw NumkitError("adamw_step: moment shape mismatch");
    if (!params[i]->grad().all_finite()) {
      throw NumkitError("adamw_step: non-finite gradient in parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable()) continue;
    auto& w = p.value();
    const auto& g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      w[j] *= 1.0 - lr * cfg.weight_decay;
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double one_cycle_lr(std::size_t step, std::size_t total_steps, double base_lr, const OneCycleConfig& cfg) {
  if (total_steps == 0 || step > total_steps) {
    throw NumkitError("one_cycle_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  const double initial = base_lr / cfg.initial_div;
  const double floor = initial / cfg.final_div;
  const double warm = cfg.warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  auto cos_anneal = [](double from, double to, double pct) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * pct));
  };
  if (s <= warm) return warm > 0.0 ? cos_anneal(initial, base_lr, s / warm) : base_lr;
  return cos_anneal(base_lr, floor, (s - warm) / (static_cast<double>(total_steps) - warm));
}

}  // namespace maepde::numkit

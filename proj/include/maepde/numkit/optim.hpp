#pragma once

#include <cstddef>
#include <vector>

#include "maepde/numkit/autograd.hpp"

namespace maepde::numkit {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Moment buffers for one parameter list.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// One AdamW update: w <- w(1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps).
/// Non-trainable parameters are skipped. A non-finite gradient throws before
/// anything is modified.
void adamw_step(const std::vector<Parameter*>& params, AdamWState& state, double lr, const AdamWConfig& cfg);

class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

  void step(double lr) { adamw_step(params_, state_, lr, cfg_); }
  void zero_grad();
  const AdamWState& state() const { return state_; }
  AdamWState& state() { return state_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  AdamWState state_;
};

struct OneCycleConfig {
  double warmup_fraction = 0.3;
  double initial_div = 25.0;
  double final_div = 1e4;
};

/// Cosine one-cycle schedule: base/initial_div at step 0, base at the warmup
/// fraction, base/(initial_div*final_div) at total_steps.
double one_cycle_lr(std::size_t step, std::size_t total_steps, double base_lr, const OneCycleConfig& cfg = {});

}  // namespace maepde::numkit

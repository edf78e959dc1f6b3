#pragma once

#include <functional>
#include <memory>

#include <json.hpp>

#include "maepde/tasks/models.hpp"

namespace maepde::tasks {

/// One model call: (in_steps, space...) -> (chunk, space...).
using StepFn = std::function<Tensor(const Tensor&)>;

/// Autoregressive rollout. Each call sees the last `in_steps` steps of the
/// initial window followed by everything predicted so far and contributes
/// `chunk` steps. Returns (horizon, space...).
Tensor rollout(const StepFn& step, const Tensor& init, std::size_t horizon, std::size_t chunk);
Tensor rollout(const Stepper& model, const Tensor& init, const Var& cond, std::size_t horizon);

/// Steps [start, start + len) of a (nt, space...) tensor.
Tensor slice_steps(const Tensor& traj, std::size_t start, std::size_t len);

/// Supervised loss from `start` in a standardized trajectory. Without
/// pushforward: mse(model(u[s, s+k)), u[s+k, s+2k)). With pushforward the
/// model first predicts u[s+k, s+2k) without recording gradients, and the
/// loss is mse(model(prediction), u[s+2k, s+3k)).
Var pushforward_loss(const Stepper& model, const Tensor& traj, std::size_t start, const Var& cond, bool pushforward);

enum class SolverKind { Fno, Unet };
const char* solver_name(SolverKind k);
SolverKind solver_from_name(const std::string& name);

struct TimestepConfig {
  SolverKind solver = SolverKind::Fno;
  FnoConfig fno;
  UnetConfig unet;
  CondConfig cond;
  std::size_t window = 20;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 8e-4;
  double weight_decay = 1e-4;
  bool pushforward = true;
  /// Chance that a training example uses the pushforward pass.
  double pushforward_probability = 0.5;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::size_t workers = 0;
};

nlohmann::json to_json(const TimestepConfig& c);
TimestepConfig timestep_config_from_json(const nlohmann::json& j);

/// Solver, conditioner and the solver-side standardization.
struct TimestepModel {
  std::unique_ptr<Stepper> solver;
  std::unique_ptr<Conditioner> cond;
  Standardizer stdz;
  std::size_t window = 20;

  /// Conditioning vector for a physical-units window starting a rollout.
  Var condition(const FieldSample& window) const;
  std::vector<numkit::Parameter*> parameters();
};

TimestepModel make_timestep_model(const TimestepConfig& cfg, pdegen::Family family, const Standardizer& stdz,
                                  const maecore::Checkpoint* ck = nullptr);

/// Per-trajectory summed nRMSE of a rollout from the first window to the
/// largest multiple of the window that fits, in physical units.
std::vector<double> evaluate_rollouts(const TimestepModel& m, const std::vector<FieldSample>& samples,
                                      std::size_t workers = 0);

struct TimestepResult {
  std::vector<double> epoch_loss;
  std::vector<double> val_nrmse;  // per trajectory
  double mean_nrmse = 0.0;
};

TimestepResult train_timestep(const TimestepConfig& cfg, const std::vector<FieldSample>& train,
                              const std::vector<FieldSample>& val, const maecore::Checkpoint* ck = nullptr,
                              const std::function<void(std::size_t, double)>& on_epoch = {});

}  // namespace maepde::tasks

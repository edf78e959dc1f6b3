#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "maepde/liesym/augment.hpp"
#include "maepde/maecore/model.hpp"
#include "maepde/numkit/optim.hpp"

namespace maepde::maecore {

using pdegen::FieldSample;

/// Global mean/std standardization of field values.
struct Standardizer {
  double mean = 0.0;
  double std = 1.0;

  static Standardizer fit(const std::vector<FieldSample>& samples);
  Tensor apply(const Tensor& u) const;
  Tensor invert(const Tensor& z) const;
};

struct PretrainConfig {
  MaeConfig model;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 0.01;
  /// Lie-augmentation probability; groups follow liesym::default_config.
  double augment_probability = 0.5;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::size_t workers = 0;
};

nlohmann::json to_json(const MaeConfig& c);
MaeConfig mae_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct Checkpoint {
  nlohmann::json config;  // PretrainConfig echo
  Standardizer standardizer;
  std::vector<std::pair<std::string, Tensor>> params;
  numkit::AdamWState optimizer;
  std::string rng_state;
  std::size_t epoch = 0;
  double val_loss = 0.0;
  std::vector<double> step_losses;
  std::vector<EpochLog> log;

  MaeConfig model_config() const { return mae_config_from_json(config.at("model")); }
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot of a model's parameters in collect() order.
std::vector<std::pair<std::string, Tensor>> snapshot(MaeModel& model);
/// Copies named values into the model; names and shapes must match exactly.
void restore(MaeModel& model, const std::vector<std::pair<std::string, Tensor>>& params);
/// Builds a model from a checkpoint's config and best parameters.
MaeModel model_from_checkpoint(const Checkpoint& ck);

/// One training example: window, augment, standardize, patchify, mask.
/// `window_start` < 0 draws the start uniformly from rng.
PatchSet prepare_example(const FieldSample& s, const MaeConfig& cfg, const Standardizer& stdz,
                         double augment_probability, double mask_ratio, Rng& rng, long window_start = -1);

/// Steps [start, start + len) of a trajectory.
FieldSample window_at(const FieldSample& s, std::size_t start, std::size_t len);

/// Unmasked, standardized PatchSet of a window already cfg.window steps long.
PatchSet prepare_window(const FieldSample& window, const MaeConfig& cfg, const Standardizer& stdz);

/// Mean reconstruction loss over a batch. With `backward`, gradients of the
/// batch mean are accumulated into the model's parameters.
double batch_loss(const MaeModel& model, const std::vector<PatchSet>& batch, bool backward);

/// Held-out full-field MSE (standardized units) with fixed windows and masks
/// derived from `seed`.
double evaluate_reconstruction(const MaeModel& model, const std::vector<FieldSample>& samples,
                               const Standardizer& stdz, double mask_ratio, std::uint64_t seed);

struct PretrainResult {
  Checkpoint best;  // parameters at the lowest validation loss
  Checkpoint last;
};

/// AdamW + OneCycle over randomly windowed, optionally augmented samples.
/// A non-finite loss throws with the epoch and step.
PretrainResult pretrain(const PretrainConfig& cfg, const std::vector<FieldSample>& train,
                        const std::vector<FieldSample>& val, const std::function<void(const EpochLog&)>& on_epoch = {});

/// Splits `dataset` by cfg.val_fraction (seeded) and pretrains.
PretrainResult pretrain(const PretrainConfig& cfg, const std::vector<FieldSample>& dataset,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace maepde::maecore

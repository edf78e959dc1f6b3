#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maepde/maecore/pretrain.hpp"

namespace maepde::tasks {

using maecore::MaeModel;
using maecore::Standardizer;
using numkit::Rng;
using numkit::Tensor;
using numkit::Var;
using pdegen::FieldSample;
using pdegen::PdeSpec;

class TaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kCondDim = 32;

enum class CondSource { None, FrozenMae, FinetunedMae, RandomEnc, LinearCoeffs };

/// CLI spellings: none, mae-frozen, mae-finetune, rand-enc, linear.
const char* cond_name(CondSource s);
CondSource cond_from_name(const std::string& name);

/// Ground-truth coefficients of a sample's PDE in a fixed per-family order.
/// Families without ground-truth coefficients (inviscid Burgers) throw.
std::vector<double> coefficient_vector(const PdeSpec& spec);
std::vector<std::string> coefficient_names(pdegen::Family f);

/// Linear embedding of the coefficient vector.
class LinearCond : public numkit::Module {
 public:
  LinearCond() = default;
  LinearCond(std::size_t n_coeffs, Rng& rng);

  /// (1, kCondDim)
  Var operator()(const std::vector<double>& coeffs) const;
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  numkit::Linear proj;
};

/// CLS of an unmasked window projected to kCondDim. A frozen encoder is
/// excluded from parameters() and does not record gradients.
class MaeCond : public numkit::Module {
 public:
  MaeCond(std::shared_ptr<MaeModel> encoder, Standardizer stdz, bool frozen, Rng& rng);

  /// Loads the best parameters of a pretraining checkpoint. When `expected`
  /// is given its window and patch shape must agree with the checkpoint.
  static MaeCond from_checkpoint(const maecore::Checkpoint& ck, bool frozen, Rng& rng,
                                 const std::optional<maecore::MaeConfig>& expected = std::nullopt);

  /// With `features` (a frozen encoder's CLS for this window) the encoder pass is skipped.
  Var operator()(const FieldSample& window, const Tensor* features = nullptr) const;
  /// CLS embedding of the window, without recording.
  Tensor features(const FieldSample& window) const;
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  bool frozen() const { return frozen_; }
  const MaeModel& encoder() const { return *encoder_; }
  std::size_t window() const { return encoder_->config().window; }

  numkit::Linear proj;

 private:
  std::shared_ptr<MaeModel> encoder_;
  Standardizer stdz_;
  bool frozen_;
};

struct CondConfig {
  CondSource source = CondSource::None;
  /// Adds the -Lin embedding to an encoder embedding (sum of the two vectors).
  bool plus_linear = false;
};

/// The conditioning vector fed to a downstream model, or an undefined Var
/// for CondSource::None.
class Conditioner : public numkit::Module {
 public:
  Conditioner() = default;
  /// `ck` is required for FrozenMae and FinetunedMae; RandomEnc takes its
  /// architecture from `mae_cfg`.
  Conditioner(const CondConfig& cfg, pdegen::Family family, Rng& rng, const maecore::Checkpoint* ck = nullptr,
              const maecore::MaeConfig* mae_cfg = nullptr);

  Var operator()(const FieldSample& window, const Tensor* features = nullptr) const;
  /// Encoder features that stay fixed during training (frozen encoder only).
  std::optional<Tensor> frozen_features(const FieldSample& window) const;
  bool active() const { return lin_.has_value() || mae_.has_value(); }
  /// Time window an encoder needs, 0 without one.
  std::size_t window() const { return mae_ ? mae_->window() : 0; }
  const CondConfig& config() const { return cfg_; }
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

 private:
  CondConfig cfg_;
  std::optional<LinearCond> lin_;
  std::optional<MaeCond> mae_;
};

}  // namespace maepde::tasks

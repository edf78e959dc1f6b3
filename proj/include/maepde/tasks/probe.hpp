#pragma once

#include <memory>
#include <string>
#include <vector>

#include "maepde/tasks/cond.hpp"

namespace maepde::tasks {

enum class TaskKind { Regress, Classify, Timestep, SuperRes };

struct TaskSpec {
  TaskKind kind = TaskKind::Regress;
  std::string name;
  /// Coefficient names (Regress) or class labels (Classify).
  std::vector<std::string> targets;

  std::size_t out_dim() const { return targets.size(); }
};

TaskSpec regression_task(pdegen::Family family);
TaskSpec coefficient_task(std::vector<std::string> names);
/// Periodic / Dirichlet / Neumann on 1D Heat.
TaskSpec heat_bc_task();
/// Dirichlet / Neumann on 1D Wave.
TaskSpec wave_bc_task();
/// Heat / Advection / Burgers / KS.
TaskSpec pde_task();
/// Spatial resolutions, six in 1D and five in 2D.
TaskSpec resolution_task(bool two_d);
std::vector<std::size_t> resolution_classes(bool two_d);

/// Class index of a sample under a Classify task.
std::size_t class_label(const TaskSpec& task, const FieldSample& s);
/// Regression targets of a sample; every name must be a coefficient of its PDE.
std::vector<double> regression_target(const TaskSpec& task, const FieldSample& s);

/// Which encoder feeds the head: pretrained and frozen (MAE_f), pretrained
/// and fine-tuned (MAE), or randomly initialized and trained (MAE_b).
enum class ProbeVariant { Frozen, Finetune, Baseline };
const char* probe_variant_name(ProbeVariant v);
ProbeVariant probe_variant_from_name(const std::string& name);

class ProbeHead : public numkit::Module {
 public:
  ProbeHead() = default;
  ProbeHead(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  Var operator()(const Var& features) const { return fc2(numkit::gelu(fc1(features))); }
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;
  std::size_t out_dim() const { return fc2.out_features(); }

  numkit::Linear fc1, fc2;
};

class ProbeModel : public numkit::Module {
 public:
  ProbeModel(std::shared_ptr<MaeModel> encoder, Standardizer stdz, ProbeVariant variant, std::size_t out_dim,
             std::size_t hidden, Rng& rng);

  /// CLS of the unmasked window, (1, enc_dim).
  Var features(const FieldSample& window) const;
  Var forward(const FieldSample& window) const { return head(features(window)); }
  ProbeVariant variant() const { return variant_; }
  const MaeModel& encoder() const { return *encoder_; }
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  ProbeHead head;

 private:
  std::shared_ptr<MaeModel> encoder_;
  Standardizer stdz_;
  ProbeVariant variant_;
};

struct ProbeExample {
  FieldSample window;
  std::vector<double> target;  // Regress
  std::size_t label = 0;       // Classify
};

/// One window per sample (random start when the trajectory is longer) with
/// targets filled from the task.
std::vector<ProbeExample> make_examples(const std::vector<FieldSample>& samples, const TaskSpec& task,
                                        std::size_t window, Rng& rng);

struct ProbeConfig {
  ProbeVariant variant = ProbeVariant::Frozen;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  /// RMSE in target units (Regress) or accuracy (Classify) on the held-out set.
  double metric = 0.0;
  /// Predict-the-training-mean RMSE, or the majority-class accuracy.
  double baseline = 0.0;
  std::vector<double> epoch_loss;
};

/// Trains a probe. Frozen and Finetune start from `ck`; Baseline uses a fresh
/// encoder with `ck`'s architecture (or `arch` when there is no checkpoint).
ProbeResult train_probe(const ProbeConfig& cfg, const TaskSpec& task, const maecore::Checkpoint* ck,
                        const maecore::MaeConfig& arch, const std::vector<ProbeExample>& train,
                        const std::vector<ProbeExample>& val);

}  // namespace maepde::tasks

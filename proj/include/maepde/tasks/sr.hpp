#pragma once

#include <functional>

#include <json.hpp>

#include "maepde/tasks/models.hpp"

namespace maepde::tasks {

/// Periodic linear interpolation from n_src to n_dst points, (n_dst, n_src).
/// Destination point j sits at source coordinate j * n_src / n_dst.
Tensor linear_interp_matrix(std::size_t n_src, std::size_t n_dst);

/// Periodic cubic convolution (Keys, a = -0.5), (n_dst, n_src).
Tensor cubic_interp_matrix(std::size_t n_src, std::size_t n_dst);

/// Discretization inversion of a (steps, nx) or (steps, nx, ny) window:
/// linear in 1D, separable bicubic in 2D.
Var interpolate(const Var& window, std::size_t nx, std::size_t ny = 0);

/// Residual dense block: densely connected 3-wide convolutions, a 1x1
/// fusion and a scaled residual, plus an added conditioning projection.
class DenseBlock : public numkit::Module {
 public:
  DenseBlock() = default;
  DenseBlock(std::size_t width, std::size_t growth, std::size_t convs, std::size_t cond_dim, std::size_t kh, Rng& rng);

  Var operator()(const Var& x, const Var& cond) const;
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  std::vector<numkit::Conv2d> convs;
  numkit::Conv2d fuse;
  std::optional<numkit::Linear> cond_proj;
  std::size_t width = 0;
};

struct SrConfig {
  std::size_t steps = 20;
  std::size_t width = 64, blocks = 4, growth = 32, dense_convs = 3;
  std::size_t cond_dim = kCondDim;
  bool two_d = false;
  FnoConfig fno;  // in/out steps, zero_output and two_d are set by the pipeline
  std::uint64_t init_seed = 0;
};

/// Resnet encoder on the source grid, interpolation of its features to the
/// target grid, FNO refinement there, plus the interpolated input field.
class SrPipeline : public numkit::Module {
 public:
  explicit SrPipeline(const SrConfig& cfg);

  Var forward(const Var& low, const Var& cond, std::size_t nx, std::size_t ny = 0) const;
  /// The interpolation-only path (encoder and FNO bypassed).
  Var baseline(const Var& low, std::size_t nx, std::size_t ny = 0) const { return interpolate(low, nx, ny); }
  const SrConfig& config() const { return cfg_; }
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  numkit::Conv2d head;
  std::vector<DenseBlock> blocks;
  numkit::Conv2d body;
  Fno fno;

 private:
  SrConfig cfg_;
};

struct SrTrainConfig {
  SrConfig model;
  CondConfig cond;
  std::size_t factor = 2;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 8e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  bool deterministic = false;
};

nlohmann::json to_json(const SrTrainConfig& c);
SrTrainConfig sr_config_from_json(const nlohmann::json& j);

struct SrResult {
  std::vector<double> epoch_loss;
  /// Per validation window, summed over its steps, physical units.
  std::vector<double> sr_rmse, interp_rmse;
  double mean_sr = 0.0, mean_interp = 0.0;
};

/// Trains on windows of high-resolution trajectories whose inputs are their
/// strided downsamples by `factor`, and scores the pipeline and the
/// interpolation baseline on fixed validation windows.
SrResult train_superres(const SrTrainConfig& cfg, const std::vector<FieldSample>& train,
                        const std::vector<FieldSample>& val, const maecore::Checkpoint* ck = nullptr,
                        const std::function<void(std::size_t, double)>& on_epoch = {});

}  // namespace maepde::tasks

#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "maepde/tasks/cond.hpp"

namespace maepde::tasks {

/// A neural solver mapping an input window (in_steps, nx[, ny]) and an
/// optional conditioning vector (1, cond_dim) to the next out_steps.
class Stepper : public numkit::Module {
 public:
  virtual Var forward(const Var& window, const Var& cond) const = 0;
  virtual std::size_t in_steps() const = 0;
  virtual std::size_t out_steps() const = 0;
};

struct FnoConfig {
  std::size_t in_steps = 20, out_steps = 20;
  std::size_t width = 64, modes = 24, layers = 4;
  std::size_t proj_hidden = 128;
  /// 0 disables the conditioning projections.
  std::size_t cond_dim = kCondDim;
  bool two_d = false;
  /// Starts the output projection at zero (used inside the SR pipeline).
  bool zero_output = false;
  std::uint64_t init_seed = 0;

  static FnoConfig defaults_2d();
};

/// Lifting, spectral + pointwise layers each followed by an added projection
/// of the conditioning vector, then a pointwise projection MLP.
class Fno : public Stepper {
 public:
  explicit Fno(const FnoConfig& cfg);

  Var forward(const Var& window, const Var& cond) const override;
  std::size_t in_steps() const override { return cfg_.in_steps; }
  std::size_t out_steps() const override { return cfg_.out_steps; }
  const FnoConfig& config() const { return cfg_; }
  /// True when the grid cannot resolve the configured modes.
  bool truncates(std::size_t nx, std::size_t ny = 0) const;
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  struct Layer {
    numkit::Parameter w_re, w_im;
    numkit::Conv2d pointwise;
    std::optional<numkit::Linear> cond_proj;
  };

  numkit::Conv2d lift;
  std::vector<Layer> layers;
  numkit::Conv2d proj1, proj2;

 private:
  FnoConfig cfg_;
  std::shared_ptr<std::once_flag> truncation_logged_ = std::make_shared<std::once_flag>();
};

/// GroupNorm followed by a per-channel affine map whose scale and shift are
/// offset by a projection of the conditioning vector:
/// GN(x) * (gamma + s(c)) + (beta + b(c)).
class AdaGroupNorm : public numkit::Module {
 public:
  AdaGroupNorm() = default;
  AdaGroupNorm(std::size_t channels, std::size_t groups, std::size_t cond_dim, Rng& rng);

  Var operator()(const Var& x, const Var& cond) const;
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  std::size_t channels = 0, groups = 1;
  numkit::Parameter gamma, beta;
  std::optional<numkit::Linear> cond_proj;  // -> (2 * channels), zero-initialized
};

class ResBlock : public numkit::Module {
 public:
  ResBlock() = default;
  ResBlock(std::size_t cin, std::size_t cout, std::size_t groups, std::size_t cond_dim, std::size_t kh, Rng& rng);

  Var operator()(const Var& x, const Var& cond) const;
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  AdaGroupNorm norm1, norm2;
  numkit::Conv2d conv1, conv2;
  std::optional<numkit::Conv2d> skip;
};

struct UnetConfig {
  std::size_t in_steps = 20, out_steps = 20;
  std::size_t hidden = 16;
  std::vector<std::size_t> mults{1, 2, 4};
  std::size_t groups = 8;
  std::size_t cond_dim = kCondDim;
  bool two_d = false;
  std::uint64_t init_seed = 0;
};

/// Encoder-decoder with skip connections and AdaGN conditioning. Spatial
/// extents must be divisible by 2^(levels - 1).
class Unet : public Stepper {
 public:
  explicit Unet(const UnetConfig& cfg);

  Var forward(const Var& window, const Var& cond) const override;
  std::size_t in_steps() const override { return cfg_.in_steps; }
  std::size_t out_steps() const override { return cfg_.out_steps; }
  const UnetConfig& config() const { return cfg_; }
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  numkit::Conv2d in_conv;
  std::vector<ResBlock> down;
  ResBlock mid;
  std::vector<ResBlock> up;
  AdaGroupNorm out_norm;
  numkit::Conv2d out_conv;

 private:
  UnetConfig cfg_;
};

/// (T, nx) -> (T, 1, nx); (T, nx, ny) unchanged.
Var to_channels(const Var& window);
Var from_channels(const Var& x, bool two_d);

}  // namespace maepde::tasks

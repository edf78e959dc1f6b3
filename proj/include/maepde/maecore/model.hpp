#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maepde/maecore/patch.hpp"
#include "maepde/numkit/nn.hpp"

namespace maepde::maecore {

using numkit::Var;

enum class MultiRes { None, Pad, Interp, Token };

const char* multires_name(MultiRes m);
MultiRes multires_from_name(const std::string& name);

struct MaeConfig {
  std::size_t enc_dim = 256, enc_depth = 6, enc_heads = 8;
  std::size_t dec_dim = 32, dec_depth = 2, dec_heads = 4;
  std::size_t mlp_ratio = 4;
  PatchShape patch{5, 5, 0};
  double mask_ratio = 0.75;
  std::size_t window = 20;
  MultiRes multires = MultiRes::None;
  /// Largest spatial extents seen in training, in grid points. Pad and
  /// Interp build their positional tables at this size; 0 means "the input's".
  std::size_t max_nx = 0, max_ny = 0;
  bool masked_only_loss = false;
  std::uint64_t init_seed = 0;

  bool two_d() const { return patch.two_d(); }
  static MaeConfig defaults_2d();
};

/// CNN over the coordinate grid, mean-pooled and projected to one token.
class GridEmbedder : public numkit::Module {
 public:
  GridEmbedder() = default;
  GridEmbedder(std::size_t dims, std::size_t dim, Rng& rng);

  Var operator()(const pdegen::Grid& grid) const;
  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  std::size_t dims = 1;
  numkit::Conv2d conv1, conv2;
  numkit::Linear proj;
};

/// Encoder output. Row 0 of `seq` is the CLS embedding, followed by the grid
/// token when present, then one row per entry of `visible`.
struct LatentState {
  Var seq;
  std::size_t prefix = 1;
  std::vector<std::size_t> visible;

  Var cls() const;
  Var tokens() const;
  std::optional<Var> grid_token() const;
};

/// Row-level layout of the decoder input for one PatchSet.
struct DecoderLayout {
  std::vector<std::size_t> rows;    // index into [encoded rows..., mask token]
  std::vector<bool> key_valid;      // false for padding slots
  std::vector<std::size_t> output;  // decoder row of each real patch, in patch order
  Tensor pos;                       // additive positional table (prefix rows are zero)
  std::size_t mask_slots = 0;       // mask-token rows, padding included
};

class MaeModel : public numkit::Module {
 public:
  explicit MaeModel(const MaeConfig& cfg);

  const MaeConfig& config() const { return cfg_; }

  LatentState encode(const PatchSet& ps) const;
  /// Predicted patch values (N, patch volume) in patch order.
  Var decode_patches(const LatentState& latent, const PatchSet& ps) const;
  /// decode_patches reshaped to the field.
  Tensor decode(const LatentState& latent, const PatchSet& ps) const;

  /// Positional rows (N, dim) for the real patches of `ps`.
  Tensor positions(const PatchSet& ps, std::size_t dim) const;
  DecoderLayout decoder_layout(const LatentState& latent, const PatchSet& ps) const;

  void collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) override;

  numkit::Linear patch_embed;
  numkit::Parameter cls_token;
  std::optional<GridEmbedder> grid_embed;
  std::vector<numkit::TransformerBlock> enc_blocks;
  numkit::LayerNorm enc_norm;
  numkit::Linear dec_embed;
  numkit::Parameter mask_token;
  std::vector<numkit::TransformerBlock> dec_blocks;
  numkit::LayerNorm dec_norm;
  numkit::Linear dec_out;

 private:
  TokenGrid table_grid(const PatchSet& ps) const;
  Tensor axis_table(std::size_t actual, std::size_t max_tokens, std::size_t dim, bool spatial) const;

  MaeConfig cfg_;
};

/// Full-field MSE between predicted patches and the PatchSet's own values, or
/// the masked patches only when `masked_only` is set and any are masked.
Var mae_loss(const Var& pred_patches, const PatchSet& ps, bool masked_only = false);

/// Plain MSE of two fields.
double mae_loss(const Tensor& reconstruction, const Tensor& target);

/// Coordinate channels of a grid as (dims, nx or 1, nx or ny).
Tensor grid_coordinates(const pdegen::Grid& grid);

}  // namespace maepde::maecore

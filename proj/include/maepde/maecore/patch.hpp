#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "maepde/numkit/random.hpp"
#include "maepde/numkit/tensor.hpp"
#include "maepde/pdegen/pde.hpp"

namespace maepde::maecore {

using numkit::Rng;
using numkit::Shape;
using numkit::Tensor;

class MaeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Patch extents (pt, px[, py]); py = 0 for 1D fields.
struct PatchShape {
  std::size_t pt = 5, px = 5, py = 0;
  bool two_d() const { return py > 0; }
  std::size_t volume() const { return pt * px * (two_d() ? py : 1); }
  bool operator==(const PatchShape&) const = default;
};

/// Token counts along (t, x[, y]).
struct TokenGrid {
  std::size_t nt = 0, nx = 0, ny = 0;
  std::size_t count() const { return nt * nx * (ny ? ny : 1); }
  bool operator==(const TokenGrid&) const = default;
};

using TokenPos = std::array<std::size_t, 3>;

struct PatchSet {
  Tensor patches;  // (N, patch volume)
  std::vector<TokenPos> positions;
  std::vector<std::size_t> visible_idx;
  std::vector<std::size_t> masked_idx;
  Shape field_shape;
  PatchShape patch;
  TokenGrid tokens;
  pdegen::Grid grid;

  std::size_t size() const { return positions.size(); }
};

/// Splits a (nt, nx[, ny]) field into non-overlapping patches in row-major
/// token order. All patches start visible.
PatchSet patchify(const Tensor& field, const PatchShape& patch);

/// Inverse of patchify for values shaped (N, patch volume).
Tensor unpatchify(const Tensor& values, const Shape& field_shape, const PatchShape& patch);

struct MaskSplit {
  std::vector<std::size_t> visible;
  std::vector<std::size_t> masked;
};

/// Uniform partition: round(ratio * n) indices masked, both lists sorted.
MaskSplit sample_mask(std::size_t n, double ratio, Rng& rng);

/// Applies a fresh mask to `ps`.
void apply_mask(PatchSet& ps, double ratio, Rng& rng);

/// Sinusoidal table: row p, column 2i = sin(p w_i), 2i+1 = cos(p w_i),
/// w_i = 10000^(-2i/dim). `dim` must be even.
Tensor pos_embed(std::size_t length, std::size_t dim);

/// Linear resampling of the rows of `base` to `target_length` rows spanning
/// the same first-to-last range.
Tensor interp_pos_embed(const Tensor& base, std::size_t target_length);

}  // namespace maepde::maecore

#include "maepde/maecore/patch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maepde::maecore {
namespace {

TokenGrid token_grid(const Shape& shape, const PatchShape& p) {
  const bool two_d = shape.size() == 3;
  if (shape.size() != 2 && !two_d) throw MaeError("patchify expects a (nt, nx) or (nt, nx, ny) field");
  if (two_d != p.two_d()) throw MaeError("patch rank does not match field rank");
  auto check = [](std::size_t n, std::size_t k, const char* axis) {
    if (k == 0 || n % k != 0) {
      throw MaeError(std::string("field extent ") + std::to_string(n) + " along " + axis +
                     " is not divisible by patch extent " + std::to_string(k));
    }
    return n / k;
  };
  TokenGrid g;
  g.nt = check(shape[0], p.pt, "t");
  g.nx = check(shape[1], p.px, "x");
  if (two_d) g.ny = check(shape[2], p.py, "y");
  return g;
}

// Calls f(token, offset-in-patch, flat field index) for every field entry.
template <class F>
void for_each_entry(const Shape& shape, const PatchShape& p, const TokenGrid& g, F&& f) {
  const std::size_t py = p.two_d() ? p.py : 1, ny_tok = g.ny ? g.ny : 1, ny = p.two_d() ? shape[2] : 1;
  for (std::size_t a = 0; a < g.nt; ++a)
    for (std::size_t b = 0; b < g.nx; ++b)
      for (std::size_t c = 0; c < ny_tok; ++c) {
        const std::size_t token = (a * g.nx + b) * ny_tok + c;
        std::size_t off = 0;
        for (std::size_t i = 0; i < p.pt; ++i)
          for (std::size_t j = 0; j < p.px; ++j)
            for (std::size_t k = 0; k < py; ++k, ++off) {
              const std::size_t flat = ((a * p.pt + i) * shape[1] + b * p.px + j) * ny + c * py + k;
              f(token, off, flat);
            }
      }
}

}  // namespace

PatchSet patchify(const Tensor& field, const PatchShape& patch) {
  PatchSet ps;
  ps.field_shape = field.shape();
  ps.patch = patch;
  ps.tokens = token_grid(field.shape(), patch);
  const std::size_t n = ps.tokens.count(), vol = patch.volume();
  ps.patches = Tensor(Shape{n, vol});
  for_each_entry(field.shape(), patch, ps.tokens,
                 [&](std::size_t t, std::size_t off, std::size_t flat) { ps.patches[t * vol + off] = field[flat]; });
  const std::size_t ny_tok = ps.tokens.ny ? ps.tokens.ny : 1;
  ps.positions.resize(n);
  for (std::size_t t = 0; t < n; ++t) ps.positions[t] = {t / (ps.tokens.nx * ny_tok), (t / ny_tok) % ps.tokens.nx, t % ny_tok};
  ps.visible_idx.resize(n);
  for (std::size_t t = 0; t < n; ++t) ps.visible_idx[t] = t;
  return ps;
}

Tensor unpatchify(const Tensor& values, const Shape& field_shape, const PatchShape& patch) {
  const TokenGrid g = token_grid(field_shape, patch);
  const std::size_t vol = patch.volume();
  if (values.rank() != 2 || values.dim(0) != g.count() || values.dim(1) != vol) {
    throw MaeError("unpatchify: values " + numkit::shape_str(values.shape()) + " do not match " +
                   std::to_string(g.count()) + " patches of " + std::to_string(vol));
  }
  Tensor out(field_shape);
  for_each_entry(field_shape, patch, g, [&](std::size_t t, std::size_t off, std::size_t flat) { out[flat] = values[t * vol + off]; });
  return out;
}

MaskSplit sample_mask(std::size_t n, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw MaeError("masking ratio outside [0, 1]");
  const auto n_masked = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  const auto perm = numkit::permutation(rng, n);
  MaskSplit s;
  s.masked.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_masked));
  s.visible.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_masked), perm.end());
  std::sort(s.masked.begin(), s.masked.end());
  std::sort(s.visible.begin(), s.visible.end());
  return s;
}

void apply_mask(PatchSet& ps, double ratio, Rng& rng) {
  MaskSplit s = sample_mask(ps.size(), ratio, rng);
  ps.visible_idx = std::move(s.visible);
  ps.masked_idx = std::move(s.masked);
}

Tensor pos_embed(std::size_t length, std::size_t dim) {
  if (dim % 2 != 0) throw MaeError("positional embedding dim must be even");
  Tensor t(Shape{length, dim});
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    for (std::size_t p = 0; p < length; ++p) {
      t.at(p, 2 * i) = std::sin(static_cast<double>(p) * w);
      t.at(p, 2 * i + 1) = std::cos(static_cast<double>(p) * w);
    }
  }
  return t;
}

Tensor interp_pos_embed(const Tensor& base, std::size_t target_length) {
  const std::size_t n = base.dim(0), dim = base.dim(1);
  if (target_length > n) {
    throw MaeError("interp_pos_embed: target length " + std::to_string(target_length) + " exceeds base " + std::to_string(n));
  }
  if (target_length == n) return base;
  Tensor out(Shape{target_length, dim});
  for (std::size_t r = 0; r < target_length; ++r) {
    const double s = target_length == 1 ? 0.0 : static_cast<double>(r) * static_cast<double>(n - 1) / static_cast<double>(target_length - 1);
    const auto lo = std::min(static_cast<std::size_t>(s), n - 1);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double w = s - static_cast<double>(lo);
    for (std::size_t c = 0; c < dim; ++c) out.at(r, c) = (1.0 - w) * base.at(lo, c) + w * base.at(hi, c);
  }
  return out;
}

}  // namespace maepde::maecore

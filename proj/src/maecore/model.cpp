#include "maepde/maecore/model.hpp"

#include <algorithm>

namespace maepde::maecore {

using numkit::NamedParam;

const char* multires_name(MultiRes m) {
  switch (m) {
    case MultiRes::None: return "none";
    case MultiRes::Pad: return "pad";
    case MultiRes::Interp: return "interp";
    case MultiRes::Token: return "token";
  }
  return "?";
}

MultiRes multires_from_name(const std::string& name) {
  for (MultiRes m : {MultiRes::None, MultiRes::Pad, MultiRes::Interp, MultiRes::Token})
    if (name == multires_name(m)) return m;
  throw MaeError("unknown multi-resolution strategy '" + name + "'");
}

MaeConfig MaeConfig::defaults_2d() {
  MaeConfig c;
  c.patch = {4, 4, 4};
  c.mask_ratio = 0.9;
  c.window = 16;
  return c;
}

Tensor grid_coordinates(const pdegen::Grid& grid) {
  if (!grid.two_d()) {
    Tensor c(Shape{1, 1, grid.nx});
    for (std::size_t i = 0; i < grid.nx; ++i) c[i] = grid.x(i);
    return c;
  }
  Tensor c(Shape{2, grid.nx, grid.ny});
  const std::size_t plane = grid.nx * grid.ny;
  for (std::size_t i = 0; i < grid.nx; ++i)
    for (std::size_t j = 0; j < grid.ny; ++j) {
      c[i * grid.ny + j] = grid.x(i);
      c[plane + i * grid.ny + j] = grid.y(j);
    }
  return c;
}

GridEmbedder::GridEmbedder(std::size_t dims_, std::size_t dim, Rng& rng) : dims(dims_) {
  const std::size_t kh = dims == 1 ? 1 : 3;
  conv1 = numkit::Conv2d(dims, 16, kh, 3, rng);
  conv2 = numkit::Conv2d(16, 16, kh, 3, rng);
  proj = numkit::Linear(16, dim, rng);
}

Var GridEmbedder::operator()(const pdegen::Grid& grid) const {
  const Tensor coords = grid_coordinates(grid);
  if (coords.dim(0) != dims) throw MaeError("grid token: grid rank does not match the embedder");
  Var h = numkit::gelu(conv2(numkit::gelu(conv1(Var(coords)))));
  const std::size_t hw = coords.dim(1) * coords.dim(2);
  h = numkit::reshape(h, Shape{16, hw});
  const Var pool(Tensor(Shape{hw, 1}, 1.0 / static_cast<double>(hw)));
  return proj(numkit::reshape(numkit::matmul(h, pool), Shape{1, 16}));
}

void GridEmbedder::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  conv1.collect(join(prefix, "conv1"), out);
  conv2.collect(join(prefix, "conv2"), out);
  proj.collect(join(prefix, "proj"), out);
}

Var LatentState::cls() const { return numkit::gather_rows(seq, {0}); }

Var LatentState::tokens() const {
  std::vector<std::size_t> rows(visible.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = prefix + i;
  return numkit::gather_rows(seq, rows);
}

std::optional<Var> LatentState::grid_token() const {
  if (prefix < 2) return std::nullopt;
  return numkit::gather_rows(seq, {1});
}

MaeModel::MaeModel(const MaeConfig& cfg) : cfg_(cfg) {
  const std::size_t split = cfg.two_d() ? 8 : 4;
  if (cfg.enc_dim % split != 0 || cfg.dec_dim % split != 0) {
    throw MaeError("embedding dims must be divisible by " + std::to_string(split) + " for the factorized positional table");
  }
  if (cfg.enc_dim % cfg.enc_heads != 0 || cfg.dec_dim % cfg.dec_heads != 0) {
    throw MaeError("embedding dims must be divisible by the head counts");
  }
  Rng rng(numkit::derive_seed(cfg.init_seed, 0x4d4145));
  const std::size_t vol = cfg.patch.volume();
  patch_embed = numkit::Linear(vol, cfg.enc_dim, rng);
  Tensor cls(Shape{1, cfg.enc_dim});
  for (auto& v : cls.values()) v = numkit::normal(rng, 0.0, 0.02);
  cls_token = numkit::Parameter(std::move(cls));
  if (cfg.multires == MultiRes::Token) grid_embed.emplace(cfg.two_d() ? 2 : 1, cfg.enc_dim, rng);
  for (std::size_t i = 0; i < cfg.enc_depth; ++i) enc_blocks.emplace_back(cfg.enc_dim, cfg.enc_heads, cfg.mlp_ratio, rng);
  enc_norm = numkit::LayerNorm(cfg.enc_dim);
  dec_embed = numkit::Linear(cfg.enc_dim, cfg.dec_dim, rng);
  Tensor mask(Shape{1, cfg.dec_dim});
  for (auto& v : mask.values()) v = numkit::normal(rng, 0.0, 0.02);
  mask_token = numkit::Parameter(std::move(mask));
  for (std::size_t i = 0; i < cfg.dec_depth; ++i) dec_blocks.emplace_back(cfg.dec_dim, cfg.dec_heads, cfg.mlp_ratio, rng);
  dec_norm = numkit::LayerNorm(cfg.dec_dim);
  dec_out = numkit::Linear(cfg.dec_dim, vol, rng);
}

void MaeModel::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  patch_embed.collect(join(prefix, "patch_embed"), out);
  out.push_back({join(prefix, "cls_token"), &cls_token});
  if (grid_embed) grid_embed->collect(join(prefix, "grid_embed"), out);
  for (std::size_t i = 0; i < enc_blocks.size(); ++i) enc_blocks[i].collect(join(prefix, "enc." + std::to_string(i)), out);
  enc_norm.collect(join(prefix, "enc_norm"), out);
  dec_embed.collect(join(prefix, "dec_embed"), out);
  out.push_back({join(prefix, "mask_token"), &mask_token});
  for (std::size_t i = 0; i < dec_blocks.size(); ++i) dec_blocks[i].collect(join(prefix, "dec." + std::to_string(i)), out);
  dec_norm.collect(join(prefix, "dec_norm"), out);
  dec_out.collect(join(prefix, "dec_out"), out);
}

TokenGrid MaeModel::table_grid(const PatchSet& ps) const {
  TokenGrid g = ps.tokens;
  if (cfg_.max_nx) g.nx = std::max(g.nx, cfg_.max_nx / cfg_.patch.px);
  if (cfg_.max_ny && g.ny) g.ny = std::max(g.ny, cfg_.max_ny / cfg_.patch.py);
  return g;
}

Tensor MaeModel::axis_table(std::size_t actual, std::size_t max_tokens, std::size_t dim, bool spatial) const {
  if (spatial && cfg_.multires == MultiRes::Interp && max_tokens > actual) {
    return interp_pos_embed(pos_embed(max_tokens, dim), actual);
  }
  return pos_embed(std::max(actual, max_tokens), dim);
}

// Positional rows for tokens of a (nt, nx, ny) grid laid out row-major. The
// embedding dim is split into time and space halves; 2D splits space again.
namespace {
Tensor factorized(const Tensor& tt, const Tensor& tx, const Tensor* ty, const TokenGrid& g, std::size_t dim) {
  const std::size_t ny = g.ny ? g.ny : 1, n = g.nt * g.nx * ny;
  const std::size_t dt = tt.dim(1), dx = tx.dim(1);
  Tensor out(Shape{n, dim});
  for (std::size_t a = 0; a < g.nt; ++a)
    for (std::size_t b = 0; b < g.nx; ++b)
      for (std::size_t c = 0; c < ny; ++c) {
        double* row = out.data() + ((a * g.nx + b) * ny + c) * dim;
        std::copy_n(tt.data() + a * dt, dt, row);
        std::copy_n(tx.data() + b * dx, dx, row + dt);
        if (ty) std::copy_n(ty->data() + c * ty->dim(1), ty->dim(1), row + dt + dx);
      }
  return out;
}
}  // namespace

Tensor MaeModel::positions(const PatchSet& ps, std::size_t dim) const {
  const TokenGrid full = table_grid(ps);
  const bool two_d = ps.tokens.ny > 0;
  const std::size_t dt = dim / 2, dx = two_d ? dim / 4 : dim / 2;
  const Tensor tt = pos_embed(ps.tokens.nt, dt);
  const Tensor tx = axis_table(ps.tokens.nx, full.nx, dx, true);
  std::optional<Tensor> ty;
  if (two_d) ty = axis_table(ps.tokens.ny, full.ny, dim / 4, true);
  return factorized(tt, tx, ty ? &*ty : nullptr, ps.tokens, dim);
}

LatentState MaeModel::encode(const PatchSet& ps) const {
  if (ps.visible_idx.empty()) throw MaeError("encode: no visible patches");
  if (ps.patches.dim(1) != cfg_.patch.volume()) throw MaeError("encode: patch volume does not match the model");
  const std::size_t vol = ps.patches.dim(1), d = cfg_.enc_dim;
  const Tensor pos_all = positions(ps, d);
  Tensor x(Shape{ps.visible_idx.size(), vol}), pos(Shape{ps.visible_idx.size(), d});
  for (std::size_t r = 0; r < ps.visible_idx.size(); ++r) {
    const std::size_t p = ps.visible_idx[r];
    std::copy_n(ps.patches.data() + p * vol, vol, x.data() + r * vol);
    std::copy_n(pos_all.data() + p * d, d, pos.data() + r * d);
  }
  std::vector<Var> parts{cls_token.var()};
  if (grid_embed) parts.push_back((*grid_embed)(ps.grid));
  parts.push_back(numkit::add(patch_embed(Var(std::move(x))), Var(std::move(pos))));
  Var h = numkit::concat_rows(parts);
  for (const auto& b : enc_blocks) h = b(h);
  LatentState s;
  s.seq = enc_norm(h);
  s.prefix = grid_embed ? 2 : 1;
  s.visible = ps.visible_idx;
  return s;
}

DecoderLayout MaeModel::decoder_layout(const LatentState& latent, const PatchSet& ps) const {
  const std::size_t d = cfg_.dec_dim;
  const bool pad = cfg_.multires == MultiRes::Pad;
  TokenGrid full = pad ? table_grid(ps) : ps.tokens;
  const std::size_t ny_real = ps.tokens.ny ? ps.tokens.ny : 1, ny_full = full.ny ? full.ny : 1;
  const std::size_t encoded_rows = latent.prefix + latent.visible.size();
  const std::size_t mask_row = encoded_rows;

  std::vector<std::size_t> slot_of(ps.size(), mask_row);
  for (std::size_t k = 0; k < latent.visible.size(); ++k) slot_of[latent.visible[k]] = latent.prefix + k;

  DecoderLayout L;
  for (std::size_t r = 0; r < latent.prefix; ++r) L.rows.push_back(r);
  L.key_valid.assign(latent.prefix, true);

  // Positional rows for the full (possibly padded) token grid.
  const bool two_d = full.ny > 0;
  const Tensor tt = pos_embed(full.nt, d / 2);
  const Tensor tx = axis_table(ps.tokens.nx, table_grid(ps).nx, two_d ? d / 4 : d / 2, true);
  std::optional<Tensor> ty;
  if (two_d) ty = axis_table(ps.tokens.ny, table_grid(ps).ny, d / 4, true);
  // Interp tables hold exactly the real token counts; padding only happens under Pad.
  const Tensor grid_pos = factorized(tt, tx, ty ? &*ty : nullptr, full, d);

  const std::size_t n_full = full.count();
  L.pos = Tensor(Shape{latent.prefix + n_full, d});
  L.output.assign(ps.size(), 0);
  for (std::size_t a = 0; a < full.nt; ++a)
    for (std::size_t b = 0; b < full.nx; ++b)
      for (std::size_t c = 0; c < ny_full; ++c) {
        const std::size_t fidx = (a * full.nx + b) * ny_full + c;
        const std::size_t row = latent.prefix + fidx;
        std::copy_n(grid_pos.data() + fidx * d, d, L.pos.data() + row * d);
        const bool real = b < ps.tokens.nx && c < ny_real;
        if (real) {
          const std::size_t p = (a * ps.tokens.nx + b) * ny_real + c;
          L.rows.push_back(slot_of[p]);
          L.output[p] = row;
          if (slot_of[p] == mask_row) ++L.mask_slots;
        } else {
          L.rows.push_back(mask_row);
          ++L.mask_slots;
        }
        L.key_valid.push_back(real);
      }
  if (std::all_of(L.key_valid.begin(), L.key_valid.end(), [](bool v) { return v; })) L.key_valid.clear();
  return L;
}

Var MaeModel::decode_patches(const LatentState& latent, const PatchSet& ps) const {
  if (latent.seq.dim(0) != latent.prefix + latent.visible.size()) throw MaeError("decode: latent does not match its visible list");
  for (std::size_t p : latent.visible)
    if (p >= ps.size()) throw MaeError("decode: latent refers to a patch outside the PatchSet");
  const DecoderLayout L = decoder_layout(latent, ps);
  Var y = dec_embed(latent.seq);
  Var all = numkit::concat_rows({y, mask_token.var()});
  Var h = numkit::add(numkit::gather_rows(all, L.rows), Var(L.pos));
  for (const auto& b : dec_blocks) h = b(h, L.key_valid);
  h = dec_norm(h);
  return dec_out(numkit::gather_rows(h, L.output));
}

Tensor MaeModel::decode(const LatentState& latent, const PatchSet& ps) const {
  return unpatchify(decode_patches(latent, ps).value(), ps.field_shape, ps.patch);
}

Var mae_loss(const Var& pred_patches, const PatchSet& ps, bool masked_only) {
  if (pred_patches.shape() != ps.patches.shape()) throw MaeError("mae_loss: prediction shape does not match patches");
  if (masked_only && !ps.masked_idx.empty()) {
    const std::size_t vol = ps.patches.dim(1);
    Tensor target(Shape{ps.masked_idx.size(), vol});
    for (std::size_t r = 0; r < ps.masked_idx.size(); ++r)
      std::copy_n(ps.patches.data() + ps.masked_idx[r] * vol, vol, target.data() + r * vol);
    return numkit::mse(numkit::gather_rows(pred_patches, ps.masked_idx), Var(std::move(target)));
  }
  return numkit::mse(pred_patches, Var(ps.patches));
}

double mae_loss(const Tensor& reconstruction, const Tensor& target) {
  if (reconstruction.shape() != target.shape()) throw MaeError("mae_loss: shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) s += (reconstruction[i] - target[i]) * (reconstruction[i] - target[i]);
  return s / static_cast<double>(target.size());
}

}  // namespace maepde::maecore

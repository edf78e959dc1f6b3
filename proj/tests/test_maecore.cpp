#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "maepde/maecore/pretrain.hpp"
#include "maepde/numkit/gradcheck.hpp"

using namespace maepde::maecore;
using maepde::numkit::Parameter;
using maepde::pdegen::Family;

namespace {

Tensor random_field(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = maepde::numkit::normal(rng);
  return t;
}

MaeConfig tiny(MultiRes m = MultiRes::None) {
  MaeConfig c;
  c.enc_dim = 16;
  c.enc_depth = 2;
  c.enc_heads = 2;
  c.dec_dim = 8;
  c.dec_depth = 1;
  c.dec_heads = 2;
  c.mlp_ratio = 2;
  c.patch = {5, 4, 0};
  c.window = 10;
  c.multires = m;
  c.init_seed = 11;
  return c;
}

std::vector<FieldSample> kdv_set(std::size_t n, std::size_t nt, std::size_t nx, std::uint64_t seed) {
  std::vector<FieldSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(maepde::numkit::derive_seed(seed, i));
    auto spec = maepde::pdegen::sample_spec(Family::KdVBurgers, rng);
    auto g = maepde::pdegen::default_grid(Family::KdVBurgers);
    g.nt = nt;
    g.nx = nx;
    g.t1 = g.t0 + (nt - 1) * (2.0 / 249.0);
    out.push_back(maepde::pdegen::solve(spec, g));
  }
  return out;
}

PatchSet masked_set(const Tensor& field, const PatchShape& p, double ratio, std::uint64_t seed) {
  PatchSet ps = patchify(field, p);
  Rng rng(seed);
  apply_mask(ps, ratio, rng);
  return ps;
}

}  // namespace

TEST(Patchify, CountsAndLayout) {
  const Tensor f = random_field({20, 100}, 1);
  const PatchSet ps = patchify(f, {5, 5, 0});
  EXPECT_EQ(ps.size(), 80u);
  EXPECT_EQ(ps.patches.dim(1), 25u);
  EXPECT_EQ(ps.patches.at(0, 0), f.at(0, 0));
  EXPECT_EQ(ps.patches.at(0, 6), f.at(1, 1));
  EXPECT_EQ(ps.patches.at(21, 0), f.at(5, 5));  // token (1, 1)
  EXPECT_EQ(ps.positions[21], (TokenPos{1, 1, 0}));
  EXPECT_EQ(unpatchify(ps.patches, f.shape(), ps.patch), f);

  const Tensor g = random_field({16, 64, 64}, 2);
  const PatchSet q = patchify(g, {4, 4, 4});
  EXPECT_EQ(q.size(), 1024u);
  EXPECT_EQ(q.patches.dim(1), 64u);
  EXPECT_EQ(unpatchify(q.patches, g.shape(), q.patch), g);
  EXPECT_EQ(q.patches.at(17, 5), g.at(0, 4 + 1, 4 + 1));  // token (0, 1, 1), offset (0, 1, 1)
}

TEST(Patchify, Errors) {
  EXPECT_THROW(patchify(random_field({20, 98}, 1), {5, 5, 0}), MaeError);
  EXPECT_THROW(patchify(random_field({20, 100}, 1), {5, 5, 5}), MaeError);
  EXPECT_THROW(unpatchify(Tensor(Shape{3, 25}), Shape{20, 100}, {5, 5, 0}), MaeError);
}

TEST(SampleMask, SizesAndPartition) {
  Rng rng(3);
  for (double ratio : {0.0, 0.25, 0.6, 0.75, 0.9, 1.0}) {
    for (std::size_t n : {1u, 7u, 80u}) {
      const MaskSplit s = sample_mask(n, ratio, rng);
      EXPECT_EQ(s.masked.size(), static_cast<std::size_t>(std::llround(ratio * n)));
      std::vector<int> seen(n, 0);
      for (auto i : s.masked) seen[i]++;
      for (auto i : s.visible) seen[i]++;
      for (int c : seen) EXPECT_EQ(c, 1);
    }
  }
  const MaskSplit s = sample_mask(80, 0.75, rng);
  EXPECT_EQ(s.masked.size(), 60u);
  EXPECT_EQ(s.visible.size(), 20u);
  EXPECT_THROW(sample_mask(10, 1.5, rng), MaeError);
}

TEST(SampleMask, UniformFrequency) {
  Rng rng(4);
  std::vector<int> hits(80, 0);
  for (int d = 0; d < 10000; ++d)
    for (auto i : sample_mask(80, 0.75, rng).masked) hits[i]++;
  for (int h : hits) EXPECT_NEAR(h / 10000.0, 0.75, 0.02);
}

TEST(PosEmbed, Properties) {
  const Tensor t = pos_embed(16, 8);
  EXPECT_EQ(t.at(0, 0), 0.0);
  EXPECT_EQ(t.at(0, 1), 1.0);
  EXPECT_NEAR(t.at(3, 2), std::sin(3.0 * std::pow(10000.0, -2.0 / 8.0)), 1e-15);
  EXPECT_EQ(interp_pos_embed(t, 16), t);
  const Tensor half = interp_pos_embed(t, 11);
  EXPECT_EQ(half.dim(0), 11u);
  for (std::size_t r = 0; r < 11; ++r) {
    const double s = r * 15.0 / 10.0;
    const auto lo = static_cast<std::size_t>(s), hi = std::min<std::size_t>(lo + 1, 15);
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_GE(half.at(r, c), std::min(t.at(lo, c), t.at(hi, c)) - 1e-15);
      EXPECT_LE(half.at(r, c), std::max(t.at(lo, c), t.at(hi, c)) + 1e-15);
    }
  }
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(half.at(10, c), t.at(15, c));
  EXPECT_THROW(interp_pos_embed(t, 17), MaeError);
  EXPECT_THROW(pos_embed(4, 7), MaeError);
}

TEST(GridToken, DeterministicAndResolutionAware) {
  Rng rng(5);
  GridEmbedder emb(1, 16, rng);
  auto g64 = maepde::pdegen::default_grid(Family::KdVBurgers);
  g64.nx = 64;
  auto g48 = g64;
  g48.nx = 48;
  const Tensor a = emb(g64).value(), b = emb(g64).value(), c = emb(g48).value();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.shape(), (Shape{1, 16}));
  EXPECT_GT(std::abs(maepde::numkit::l2_norm(a.values()) - maepde::numkit::l2_norm(c.values())), 0.0);

  GridEmbedder emb2(2, 16, rng);
  auto q = maepde::pdegen::default_grid(Family::Heat2D);
  EXPECT_EQ(emb2(q).value().shape(), (Shape{1, 16}));
}

TEST(Encoder, TokenCount) {
  MaeConfig cfg = tiny();
  cfg.patch = {5, 5, 0};
  MaeModel m(cfg);
  const PatchSet ps = masked_set(random_field({20, 100}, 6), cfg.patch, 0.75, 1);
  const LatentState z = m.encode(ps);
  EXPECT_EQ(z.seq.dim(0), 21u);
  EXPECT_EQ(z.cls().shape(), (Shape{1, 16}));
  EXPECT_EQ(z.tokens().dim(0), 20u);
  EXPECT_FALSE(z.grid_token().has_value());

  MaeModel mt([&] { auto c = cfg; c.multires = MultiRes::Token; return c; }());
  PatchSet ps2 = ps;
  ps2.grid = maepde::pdegen::default_grid(Family::KdVBurgers);
  const LatentState zt = mt.encode(ps2);
  EXPECT_EQ(zt.seq.dim(0), 22u);
  EXPECT_TRUE(zt.grid_token().has_value());

  PatchSet empty = ps;
  empty.visible_idx.clear();
  EXPECT_THROW(m.encode(empty), MaeError);
}

TEST(Encoder, PermutationEquivariance) {
  MaeModel m(tiny());
  const PatchSet ps = masked_set(random_field({20, 32}, 7), tiny().patch, 0.5, 2);
  PatchSet perm = ps;
  Rng rng(9);
  const auto order = maepde::numkit::permutation(rng, ps.visible_idx.size());
  for (std::size_t i = 0; i < order.size(); ++i) perm.visible_idx[i] = ps.visible_idx[order[i]];
  const Tensor a = m.encode(ps).seq.value(), b = m.encode(perm).seq.value();
  for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(a.at(0, c), b.at(0, c), 1e-10);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(b.at(1 + i, c), a.at(1 + order[i], c), 1e-10);
  // Decoding is independent of the visible ordering too.
  EXPECT_LT(maepde::numkit::max_abs_diff(m.decode(m.encode(ps), ps), m.decode(m.encode(perm), perm)), 1e-10);
}

TEST(Encoder, EvalDeterminism) {
  MaeModel m(tiny());
  const PatchSet ps = masked_set(random_field({20, 32}, 8), tiny().patch, 0.75, 3);
  EXPECT_EQ(m.encode(ps).seq.value(), m.encode(ps).seq.value());
  EXPECT_EQ(m.decode(m.encode(ps), ps), m.decode(m.encode(ps), ps));
}

TEST(Decoder, ShapeAndMaskTokens) {
  MaeModel m(tiny());
  const Tensor f = random_field({20, 32}, 9);
  const PatchSet ps = masked_set(f, tiny().patch, 0.75, 4);
  EXPECT_EQ(m.decode(m.encode(ps), ps).shape(), f.shape());
  EXPECT_EQ(m.decoder_layout(m.encode(ps), ps).mask_slots, ps.masked_idx.size());
  const PatchSet full = masked_set(f, tiny().patch, 0.0, 4);
  EXPECT_EQ(m.decoder_layout(m.encode(full), full).mask_slots, 0u);
}

TEST(Decoder, MaskTokenGradient) {
  MaeModel m(tiny());
  const PatchSet ps = masked_set(random_field({20, 32}, 10), tiny().patch, 0.75, 5);
  m.zero_grad();
  mae_loss(m.decode_patches(m.encode(ps), ps), ps).backward();
  double norm = 0.0;
  for (double g : m.mask_token.grad().values()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  std::vector<Parameter*> only{&m.mask_token};
  EXPECT_LT(maepde::numkit::grad_check_params([&] { return mae_loss(m.decode_patches(m.encode(ps), ps), ps); }, only), 1e-4);
}

TEST(Loss, GradCheckTwoLayerEncoderFourPatches) {
  MaeConfig cfg = tiny();
  cfg.patch = {2, 2, 0};
  cfg.enc_dim = 8;
  MaeModel m(cfg);
  const PatchSet ps = masked_set(random_field({4, 4}, 11), cfg.patch, 0.5, 6);
  EXPECT_EQ(ps.size(), 4u);
  std::vector<Parameter*> params;
  for (auto& np : m.named_parameters())
    if (np.name.find("attn.k.bias") == std::string::npos) params.push_back(np.param);
  EXPECT_LT(maepde::numkit::grad_check_params([&] { return mae_loss(m.decode_patches(m.encode(ps), ps), ps); }, params), 1e-4);
}

TEST(Loss, Examples) {
  const Tensor t = random_field({20, 32}, 12);
  EXPECT_EQ(mae_loss(t, t), 0.0);
  Tensor shifted = t;
  for (auto& v : shifted.values()) v += 0.3;
  EXPECT_NEAR(mae_loss(shifted, t), 0.09, 1e-12);
  const Tensor r = random_field({20, 32}, 13);
  double brute = 0.0;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 32; ++j) brute += std::pow(r.at(i, j) - t.at(i, j), 2);
  brute /= 640.0;
  EXPECT_NEAR(mae_loss(r, t), brute, 1e-12);
  // The autograd form agrees with the field form.
  const PatchSet ps = patchify(t, {5, 4, 0});
  const PatchSet pr = patchify(r, {5, 4, 0});
  EXPECT_NEAR(mae_loss(Var(pr.patches), ps).value()[0], brute, 1e-12);
}

TEST(Loss, MaskedOnlySwitch) {
  const Tensor t = random_field({20, 32}, 14);
  PatchSet ps = masked_set(t, {5, 4, 0}, 0.5, 7);
  Tensor pred = ps.patches;
  for (auto v : ps.visible_idx)
    for (std::size_t c = 0; c < pred.dim(1); ++c) pred.at(v, c) += 1.0;
  EXPECT_EQ(mae_loss(Var(pred), ps, true).value()[0], 0.0);
  EXPECT_NEAR(mae_loss(Var(pred), ps, false).value()[0], 0.5, 1e-12);
}

TEST(MultiRes, PadOutputsIgnorePaddingAmount) {
  MaeConfig a = tiny(MultiRes::Pad), b = a;
  a.max_nx = 48;
  b.max_nx = 80;
  MaeModel ma(a), mb(b);
  const PatchSet ps = masked_set(random_field({10, 32}, 15), a.patch, 0.5, 8);
  EXPECT_GT(ma.decoder_layout(ma.encode(ps), ps).mask_slots, ps.masked_idx.size());
  EXPECT_LT(maepde::numkit::max_abs_diff(ma.decode(ma.encode(ps), ps), mb.decode(mb.encode(ps), ps)), 1e-10);
}

TEST(MultiRes, InterpResamplesSpatialPositions) {
  MaeConfig c = tiny(MultiRes::Interp);
  c.max_nx = 64;
  MaeModel m(c);
  const PatchSet lo = patchify(random_field({10, 32}, 16), c.patch);
  const Tensor pos = m.positions(lo, 16);
  const Tensor base = pos_embed(16, 8);
  // Last spatial token of the coarse grid carries the last row of the fine table.
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(pos.at(7, 8 + k), base.at(15, k), 1e-15);
  MaeModel none(tiny(MultiRes::None));
  EXPECT_NE(none.positions(lo, 16), pos);
}

TEST(Pretrain, OneStepDecreasesBatchLoss) {
  MaeModel m(tiny());
  const auto data = kdv_set(4, 20, 32, 1);
  const Standardizer st = Standardizer::fit(data);
  std::vector<PatchSet> batch;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng(i);
    batch.push_back(prepare_example(data[i], m.config(), st, 0.0, 0.75, rng));
  }
  maepde::numkit::AdamW opt(m.parameters(), {});
  opt.zero_grad();
  const double before = batch_loss(m, batch, true);
  opt.step(1e-4);
  const double after = batch_loss(m, batch, false);
  EXPECT_LT(after, before);
}

TEST(Pretrain, CheckpointRoundtripAndDeterminism) {
  PretrainConfig cfg;
  cfg.model = tiny();
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 5;
  cfg.deterministic = true;
  const auto data = kdv_set(10, 20, 32, 2);
  const PretrainResult r1 = pretrain(cfg, data);
  const PretrainResult r2 = pretrain(cfg, data);
  ASSERT_EQ(r1.last.step_losses.size(), 2u * 3u);
  EXPECT_EQ(r1.last.step_losses, r2.last.step_losses);
  for (double l : r1.last.step_losses) EXPECT_TRUE(std::isfinite(l));

  const std::string path = (std::filesystem::temp_directory_path() / "maecore_test.ck").string();
  save_checkpoint(r1.best, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.step_losses, r1.best.step_losses);
  EXPECT_EQ(back.val_loss, r1.best.val_loss);
  EXPECT_EQ(back.optimizer.m.size(), r1.best.optimizer.m.size());
  const MaeModel a = model_from_checkpoint(r1.best), b = model_from_checkpoint(back);
  std::vector<FieldSample> val(data.begin(), data.begin() + 3);
  EXPECT_EQ(evaluate_reconstruction(a, val, back.standardizer, 0.75, 1),
            evaluate_reconstruction(b, val, r1.best.standardizer, 0.75, 1));

  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputc('X', f);
    std::fclose(f);
  }
  EXPECT_THROW(load_checkpoint(path), MaeError);
  std::filesystem::remove(path);

  MaeConfig other = tiny();
  other.enc_dim = 24;
  other.enc_heads = 3;
  MaeModel wrong(other);
  EXPECT_THROW(restore(wrong, r1.best.params), MaeError);
}

TEST(Pretrain, ConfigJsonRoundtrip) {
  PretrainConfig cfg;
  cfg.model = MaeConfig::defaults_2d();
  cfg.model.multires = MultiRes::Token;
  cfg.epochs = 7;
  const PretrainConfig back = pretrain_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.model.patch, (PatchShape{4, 4, 4}));
  EXPECT_EQ(back.model.mask_ratio, 0.9);
}

TEST(Pretrain, DefaultModelSizeNearFiveMillion) {
  MaeModel m(MaeConfig{});
  EXPECT_GT(m.parameter_count(), 4'000'000u);
  EXPECT_LT(m.parameter_count(), 6'000'000u);
}

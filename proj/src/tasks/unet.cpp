#include "maepde/tasks/models.hpp"

namespace maepde::tasks {

using numkit::Parameter;

AdaGroupNorm::AdaGroupNorm(std::size_t channels, std::size_t groups, std::size_t cond_dim, Rng& rng)
    : channels(channels), groups(groups) {
  if (channels % groups != 0) {
    throw TaskError("AdaGN: " + std::to_string(channels) + " channels not divisible into " + std::to_string(groups) +
                    " groups");
  }
  gamma = Parameter(Tensor({channels}, 1.0));
  beta = Parameter(Tensor({channels}, 0.0));
  if (cond_dim > 0) {
    cond_proj.emplace(cond_dim, 2 * channels, rng);
    cond_proj->weight.value().fill(0.0);
  }
}

Var AdaGroupNorm::operator()(const Var& x, const Var& cond) const {
  Var h = numkit::group_norm(x, groups);
  Var s = gamma.var(), b = beta.var();
  if (cond.defined() && cond_proj) {
    Var sb = numkit::reshape((*cond_proj)(cond), {2 * channels});
    std::vector<std::size_t> lo(channels), hi(channels);
    for (std::size_t c = 0; c < channels; ++c) lo[c] = c, hi[c] = channels + c;
    Var col = numkit::reshape(sb, {2 * channels, 1});
    s = numkit::add(s, numkit::reshape(numkit::gather_rows(col, lo), {channels}));
    b = numkit::add(b, numkit::reshape(numkit::gather_rows(col, hi), {channels}));
  }
  return numkit::channel_affine(h, s, b);
}

void AdaGroupNorm::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  out.push_back({join(prefix, "gamma"), &gamma});
  out.push_back({join(prefix, "beta"), &beta});
  if (cond_proj) cond_proj->collect(join(prefix, "cond"), out);
}

ResBlock::ResBlock(std::size_t cin, std::size_t cout, std::size_t groups, std::size_t cond_dim, std::size_t kh,
                   Rng& rng)
    : norm1(cin, groups, cond_dim, rng),
      norm2(cout, groups, cond_dim, rng),
      conv1(cin, cout, kh, 3, rng),
      conv2(cout, cout, kh, 3, rng) {
  if (cin != cout) skip.emplace(cin, cout, 1, 1, rng);
}

Var ResBlock::operator()(const Var& x, const Var& cond) const {
  Var h = conv1(numkit::gelu(norm1(x, cond)));
  h = conv2(numkit::gelu(norm2(h, cond)));
  return numkit::add(skip ? (*skip)(x) : x, h);
}

void ResBlock::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  norm1.collect(join(prefix, "norm1"), out);
  norm2.collect(join(prefix, "norm2"), out);
  conv1.collect(join(prefix, "conv1"), out);
  conv2.collect(join(prefix, "conv2"), out);
  if (skip) skip->collect(join(prefix, "skip"), out);
}

Unet::Unet(const UnetConfig& cfg) : cfg_(cfg) {
  if (cfg.mults.size() < 2) throw TaskError("Unet needs at least two levels");
  Rng rng(numkit::derive_seed(cfg.init_seed, 0x554e4554));
  const std::size_t kh = cfg.two_d ? 3 : 1;
  const std::size_t L = cfg.mults.size();
  auto ch = [&](std::size_t l) { return cfg.hidden * cfg.mults[l]; };
  in_conv = numkit::Conv2d(cfg.in_steps, ch(0), kh, 3, rng);
  for (std::size_t l = 0; l + 1 < L; ++l) down.emplace_back(l == 0 ? ch(0) : ch(l - 1), ch(l), cfg.groups, cfg.cond_dim, kh, rng);
  mid = ResBlock(ch(L - 2), ch(L - 1), cfg.groups, cfg.cond_dim, kh, rng);
  for (std::size_t l = L - 1; l-- > 0;) up.emplace_back(ch(l + 1) + ch(l), ch(l), cfg.groups, cfg.cond_dim, kh, rng);
  out_norm = AdaGroupNorm(ch(0), cfg.groups, cfg.cond_dim, rng);
  out_conv = numkit::Conv2d(ch(0), cfg.out_steps, kh, 3, rng);
}

Var Unet::forward(const Var& window, const Var& cond) const {
  Var x = to_channels(window);
  if (x.dim(0) != cfg_.in_steps) {
    throw TaskError("Unet expects " + std::to_string(cfg_.in_steps) + " input steps, got " + std::to_string(x.dim(0)));
  }
  const std::size_t factor = std::size_t{1} << (cfg_.mults.size() - 1);
  if (x.dim(2) % factor != 0 || (cfg_.two_d && x.dim(1) % factor != 0)) {
    throw TaskError("Unet needs spatial extents divisible by " + std::to_string(factor) + ", got " +
                    numkit::shape_str(x.shape()));
  }
  const std::size_t fh = cfg_.two_d ? 2 : 1;
  Var h = in_conv(x);
  std::vector<Var> skips;
  for (const auto& block : down) {
    h = block(h, cond);
    skips.push_back(h);
    h = numkit::avg_pool(h, fh, 2);
  }
  h = mid(h, cond);
  for (std::size_t i = 0; i < up.size(); ++i) {
    h = numkit::upsample_nearest(h, fh, 2);
    h = up[i](numkit::concat_channels({h, skips[skips.size() - 1 - i]}), cond);
  }
  h = out_conv(numkit::gelu(out_norm(h, cond)));
  return from_channels(h, cfg_.two_d);
}

void Unet::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  in_conv.collect(join(prefix, "in"), out);
  for (std::size_t i = 0; i < down.size(); ++i) down[i].collect(join(prefix, "down" + std::to_string(i)), out);
  mid.collect(join(prefix, "mid"), out);
  for (std::size_t i = 0; i < up.size(); ++i) up[i].collect(join(prefix, "up" + std::to_string(i)), out);
  out_norm.collect(join(prefix, "out_norm"), out);
  out_conv.collect(join(prefix, "out"), out);
}

}  // namespace maepde::tasks

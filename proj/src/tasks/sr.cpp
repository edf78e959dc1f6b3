#include "maepde/tasks/sr.hpp"

#include <cmath>
#include <numeric>

#include "maepde/bench/metrics.hpp"
#include "maepde/numkit/optim.hpp"
#include "maepde/numkit/parallel.hpp"

namespace maepde::tasks {
namespace {

std::size_t wrap(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

double keys(double s) {
  constexpr double a = -0.5;
  s = std::abs(s);
  if (s <= 1.0) return ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0;
  if (s < 2.0) return ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a;
  return 0.0;
}

void check_sizes(std::size_t n_src, std::size_t n_dst) {
  if (n_src == 0) throw TaskError("interpolation from an empty grid");
  if (n_dst < n_src) {
    throw TaskError("target resolution " + std::to_string(n_dst) + " is below the source " + std::to_string(n_src));
  }
}

FnoConfig pipeline_fno(const SrConfig& cfg) {
  FnoConfig f = cfg.fno;
  f.in_steps = cfg.width;
  f.out_steps = cfg.steps;
  f.two_d = cfg.two_d;
  f.cond_dim = cfg.cond_dim;
  f.zero_output = true;
  f.init_seed = numkit::derive_seed(cfg.init_seed, 7);
  return f;
}

}  // namespace

Tensor linear_interp_matrix(std::size_t n_src, std::size_t n_dst) {
  check_sizes(n_src, n_dst);
  Tensor m({n_dst, n_src});
  for (std::size_t j = 0; j < n_dst; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(n_src) / static_cast<double>(n_dst);
    const double base = std::floor(pos);
    const double f = pos - base;
    const auto i0 = static_cast<long>(base);
    m.at(j, wrap(i0, n_src)) += 1.0 - f;
    m.at(j, wrap(i0 + 1, n_src)) += f;
  }
  return m;
}

Tensor cubic_interp_matrix(std::size_t n_src, std::size_t n_dst) {
  check_sizes(n_src, n_dst);
  Tensor m({n_dst, n_src});
  for (std::size_t j = 0; j < n_dst; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(n_src) / static_cast<double>(n_dst);
    const double base = std::floor(pos);
    const double f = pos - base;
    const auto i0 = static_cast<long>(base);
    for (long k = -1; k <= 2; ++k) m.at(j, wrap(i0 + k, n_src)) += keys(f - static_cast<double>(k));
  }
  return m;
}

Var interpolate(const Var& window, std::size_t nx, std::size_t ny) {
  const bool two_d = window.shape().size() == 3;
  if (two_d != (ny > 0)) throw TaskError("interpolation target dimensionality does not match the window");
  const Var x = to_channels(window);
  if (!two_d) return from_channels(numkit::resample(x, Tensor({1, 1}, 1.0), linear_interp_matrix(x.dim(2), nx)), false);
  return numkit::resample(x, cubic_interp_matrix(x.dim(1), nx), cubic_interp_matrix(x.dim(2), ny));
}

DenseBlock::DenseBlock(std::size_t width, std::size_t growth, std::size_t n_convs, std::size_t cond_dim,
                       std::size_t kh, Rng& rng)
    : width(width) {
  for (std::size_t i = 0; i < n_convs; ++i) convs.emplace_back(width + i * growth, growth, kh, 3, rng);
  fuse = numkit::Conv2d(width + n_convs * growth, width, 1, 1, rng);
  if (cond_dim > 0) {
    cond_proj.emplace(cond_dim, width, rng);
    cond_proj->weight.value().fill(0.0);
  }
}

Var DenseBlock::operator()(const Var& x, const Var& cond) const {
  std::vector<Var> feats{x};
  for (const auto& c : convs) feats.push_back(numkit::gelu(c(numkit::concat_channels(feats))));
  Var h = numkit::add(x, numkit::scale(fuse(numkit::concat_channels(feats)), 0.2));
  if (cond.defined() && cond_proj) h = numkit::channel_affine(h, Var(), numkit::reshape((*cond_proj)(cond), {width}));
  return h;
}

void DenseBlock::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(join(prefix, "conv" + std::to_string(i)), out);
  fuse.collect(join(prefix, "fuse"), out);
  if (cond_proj) cond_proj->collect(join(prefix, "cond"), out);
}

SrPipeline::SrPipeline(const SrConfig& cfg) : fno(pipeline_fno(cfg)), cfg_(cfg) {
  Rng rng(numkit::derive_seed(cfg.init_seed, 0x5352));
  const std::size_t kh = cfg.two_d ? 3 : 1;
  head = numkit::Conv2d(cfg.steps, cfg.width, kh, 3, rng);
  for (std::size_t b = 0; b < cfg.blocks; ++b)
    blocks.emplace_back(cfg.width, cfg.growth, cfg.dense_convs, cfg.cond_dim, kh, rng);
  body = numkit::Conv2d(cfg.width, cfg.width, kh, 3, rng);
}

Var SrPipeline::forward(const Var& low, const Var& cond, std::size_t nx, std::size_t ny) const {
  const Var x = to_channels(low);
  if (x.dim(0) != cfg_.steps) {
    throw TaskError("SR pipeline expects " + std::to_string(cfg_.steps) + " steps, got " + std::to_string(x.dim(0)));
  }
  Var h = head(x);
  const Var stem = h;
  for (const auto& b : blocks) h = b(h, cond);
  h = numkit::add(stem, body(h));
  const Var lifted = cfg_.two_d ? interpolate(h, nx, ny)
                                : numkit::reshape(interpolate(numkit::reshape(h, {h.dim(0), h.dim(2)}), nx),
                                                  {h.dim(0), 1, nx});
  Var refined = fno.forward(cfg_.two_d ? lifted : numkit::reshape(lifted, {lifted.dim(0), nx}), cond);
  return numkit::add(interpolate(low, nx, ny), refined);
}

void SrPipeline::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  head.collect(join(prefix, "head"), out);
  for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].collect(join(prefix, "block" + std::to_string(b)), out);
  body.collect(join(prefix, "body"), out);
  fno.collect(join(prefix, "fno"), out);
}

nlohmann::json to_json(const SrTrainConfig& c) {
  return {{"steps", c.model.steps},    {"width", c.model.width},   {"blocks", c.model.blocks},
          {"growth", c.model.growth},  {"fno_width", c.model.fno.width}, {"fno_modes", c.model.fno.modes},
          {"two_d", c.model.two_d},    {"cond", cond_name(c.cond.source)}, {"plus_linear", c.cond.plus_linear},
          {"factor", c.factor},        {"epochs", c.epochs},       {"batch_size", c.batch_size},
          {"lr", c.lr},                {"weight_decay", c.weight_decay}, {"seed", c.seed},
          {"deterministic", c.deterministic}};
}

SrTrainConfig sr_config_from_json(const nlohmann::json& j) {
  SrTrainConfig c;
  c.model.steps = j.value("steps", c.model.steps);
  c.model.width = j.value("width", c.model.width);
  c.model.blocks = j.value("blocks", c.model.blocks);
  c.model.growth = j.value("growth", c.model.growth);
  c.model.fno.width = j.value("fno_width", c.model.fno.width);
  c.model.fno.modes = j.value("fno_modes", c.model.fno.modes);
  c.model.two_d = j.value("two_d", c.model.two_d);
  c.cond.source = cond_from_name(j.value("cond", std::string("none")));
  c.cond.plus_linear = j.value("plus_linear", false);
  c.factor = j.value("factor", c.factor);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  return c;
}

namespace {

struct SrPair {
  FieldSample low, high;
};

SrPair make_pair(const FieldSample& s, std::size_t start, std::size_t steps, std::size_t factor) {
  SrPair p;
  p.high = maecore::window_at(s, start, steps);
  if (s.grid.nx % factor != 0 || (s.grid.two_d() && s.grid.ny % factor != 0)) {
    throw TaskError("grid is not divisible by the SR factor " + std::to_string(factor));
  }
  p.low = pdegen::downsample(p.high, s.grid.nx / factor, s.grid.two_d() ? s.grid.ny / factor : 0);
  return p;
}

}  // namespace

SrResult train_superres(const SrTrainConfig& cfg, const std::vector<FieldSample>& train,
                        const std::vector<FieldSample>& val, const maecore::Checkpoint* ck,
                        const std::function<void(std::size_t, double)>& on_epoch) {
  if (train.empty()) throw TaskError("empty training set");
  if (cfg.factor < 1) throw TaskError("SR factor must be at least 1");
  const Standardizer stdz = Standardizer::fit(train);
  SrConfig mc = cfg.model;
  mc.two_d = train.front().grid.two_d();
  Rng crng(numkit::derive_seed(cfg.seed, 0x434f4e44));
  Conditioner cond(cfg.cond, train.front().spec.family, crng, ck);
  mc.cond_dim = cond.active() ? kCondDim : 0;
  mc.init_seed = numkit::derive_seed(cfg.seed, 1);
  SrPipeline model(mc);
  const std::size_t T = mc.steps;
  const std::size_t nx = train.front().grid.nx, ny = train.front().grid.ny;

  auto params = model.parameters();
  for (auto* p : cond.parameters()) params.push_back(p);
  numkit::AdamW opt(params, {0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::size_t bs = std::max<std::size_t>(1, std::min(cfg.batch_size, train.size()));
  const std::size_t total = cfg.epochs * ((train.size() + bs - 1) / bs);
  Rng order_rng(numkit::derive_seed(cfg.seed, 2));
  SrResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = numkit::permutation(order_rng, train.size());
    double acc = 0.0;
    for (std::size_t b0 = 0; b0 < train.size(); b0 += bs) {
      const std::size_t b1 = std::min(train.size(), b0 + bs);
      opt.zero_grad();
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t idx = order[b];
        if (train[idx].grid.nx != nx || train[idx].grid.ny != ny) throw TaskError("SR training grids differ");
        Rng rng(numkit::derive_seed(numkit::derive_seed(cfg.seed, 3 + epoch), idx));
        const auto pair = make_pair(train[idx], numkit::uniform_index(rng, train[idx].grid.nt - T + 1), T, cfg.factor);
        const Var c = cond.active() ? cond(pair.low) : Var();
        const Var out = model.forward(Var(stdz.apply(pair.low.u)), c, nx, ny);
        Var loss = numkit::mse(out, Var(stdz.apply(pair.high.u)));
        acc += loss.value()[0];
        loss.backward(1.0 / static_cast<double>(b1 - b0));
      }
      opt.step(numkit::one_cycle_lr(step++, total, cfg.lr));
    }
    result.epoch_loss.push_back(acc / static_cast<double>(train.size()));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }

  result.sr_rmse.assign(val.size(), 0.0);
  result.interp_rmse.assign(val.size(), 0.0);
  numkit::parallel_for(
      val.size(),
      [&](std::size_t i) {
        numkit::NoGradGuard guard;
        Rng rng(numkit::derive_seed(numkit::derive_seed(cfg.seed, 0x56414c), i));
        const auto pair = make_pair(val[i], numkit::uniform_index(rng, val[i].grid.nt - T + 1), T, cfg.factor);
        const Var c = cond.active() ? cond(pair.low) : Var();
        const Var low(stdz.apply(pair.low.u));
        const Tensor sr = stdz.invert(model.forward(low, c, nx, ny).value());
        const Tensor interp = interpolate(Var(pair.low.u), nx, ny).value();
        result.sr_rmse[i] = bench::rmse_summed(sr, pair.high.u);
        result.interp_rmse[i] = bench::rmse_summed(interp, pair.high.u);
      },
      cfg.deterministic ? 1 : cfg.workers);
  if (!val.empty()) {
    const double n = static_cast<double>(val.size());
    result.mean_sr = std::accumulate(result.sr_rmse.begin(), result.sr_rmse.end(), 0.0) / n;
    result.mean_interp = std::accumulate(result.interp_rmse.begin(), result.interp_rmse.end(), 0.0) / n;
  }
  return result;
}

}  // namespace maepde::tasks

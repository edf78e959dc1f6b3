#include <iostream>

#include "maepde/tasks/models.hpp"

namespace maepde::tasks {

using numkit::Parameter;
using numkit::Shape;

FnoConfig FnoConfig::defaults_2d() {
  FnoConfig c;
  c.in_steps = c.out_steps = 16;
  c.width = 48;
  c.modes = 12;
  c.two_d = true;
  return c;
}

Var to_channels(const Var& window) {
  if (window.shape().size() == 2) return numkit::reshape(window, {window.dim(0), 1, window.dim(1)});
  if (window.shape().size() == 3) return window;
  throw TaskError("expected a (steps, nx) or (steps, nx, ny) window, got " + numkit::shape_str(window.shape()));
}

Var from_channels(const Var& x, bool two_d) {
  return two_d ? x : numkit::reshape(x, {x.dim(0), x.dim(2)});
}

Fno::Fno(const FnoConfig& cfg) : cfg_(cfg) {
  if (cfg.layers == 0 || cfg.width == 0 || cfg.modes == 0) throw TaskError("FNO needs positive layers, width and modes");
  Rng rng(numkit::derive_seed(cfg.init_seed, 0x464e4f));
  lift = numkit::Conv2d(cfg.in_steps, cfg.width, 1, 1, rng);
  const std::size_t blocks = cfg.two_d ? 2 : 1, mh = cfg.two_d ? cfg.modes : 1;
  const double scale = 1.0 / static_cast<double>(cfg.width * cfg.width);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Layer layer;
    const Shape ws{blocks, cfg.width, cfg.width, mh, cfg.modes};
    Tensor re(ws), im(ws);
    for (double& v : re.values()) v = scale * numkit::uniform(rng, 0.0, 1.0);
    for (double& v : im.values()) v = scale * numkit::uniform(rng, 0.0, 1.0);
    layer.w_re = Parameter(std::move(re));
    layer.w_im = Parameter(std::move(im));
    layer.pointwise = numkit::Conv2d(cfg.width, cfg.width, 1, 1, rng);
    if (cfg.cond_dim > 0) {
      layer.cond_proj.emplace(cfg.cond_dim, cfg.width, rng);
      layer.cond_proj->weight.value().fill(0.0);
    }
    layers.push_back(std::move(layer));
  }
  proj1 = numkit::Conv2d(cfg.width, cfg.proj_hidden, 1, 1, rng);
  proj2 = numkit::Conv2d(cfg.proj_hidden, cfg.out_steps, 1, 1, rng);
  if (cfg.zero_output) {
    proj2.weight.value().fill(0.0);
    proj2.bias.value().fill(0.0);
  }
}

bool Fno::truncates(std::size_t nx, std::size_t ny) const {
  if (cfg_.two_d) return cfg_.modes > ny / 2 + 1 || cfg_.modes > nx / 2;
  return cfg_.modes > nx / 2 + 1;
}

Var Fno::forward(const Var& window, const Var& cond) const {
  Var h = to_channels(window);
  if (h.dim(0) != cfg_.in_steps) {
    throw TaskError("FNO expects " + std::to_string(cfg_.in_steps) + " input steps, got " + std::to_string(h.dim(0)));
  }
  if (cfg_.two_d != (h.dim(1) > 1)) throw TaskError("FNO dimensionality does not match the input");
  if (truncates(h.dim(cfg_.two_d ? 1 : 2), cfg_.two_d ? h.dim(2) : 0)) {
    std::call_once(*truncation_logged_, [&] {
      std::clog << "fno: " << cfg_.modes << " modes exceed the resolvable range of a "
                << numkit::shape_str({h.dim(1), h.dim(2)}) << " grid; higher modes are dropped\n";
    });
  }
  if (cond.defined() && cond.shape() != Shape{1, cfg_.cond_dim}) {
    throw TaskError("conditioning vector has shape " + numkit::shape_str(cond.shape()));
  }
  h = lift(h);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    h = numkit::add(numkit::spectral_conv(h, layer.w_re.var(), layer.w_im.var()), layer.pointwise(h));
    if (cond.defined() && layer.cond_proj) {
      h = numkit::channel_affine(h, Var(), numkit::reshape((*layer.cond_proj)(cond), {cfg_.width}));
    }
    if (l + 1 < layers.size()) h = numkit::gelu(h);
  }
  h = proj2(numkit::gelu(proj1(h)));
  return from_channels(h, cfg_.two_d);
}

void Fno::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  lift.collect(join(prefix, "lift"), out);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = join(prefix, "layer" + std::to_string(l));
    out.push_back({join(p, "w_re"), &layers[l].w_re});
    out.push_back({join(p, "w_im"), &layers[l].w_im});
    layers[l].pointwise.collect(join(p, "pointwise"), out);
    if (layers[l].cond_proj) layers[l].cond_proj->collect(join(p, "cond"), out);
  }
  proj1.collect(join(prefix, "proj1"), out);
  proj2.collect(join(prefix, "proj2"), out);
}

}  // namespace maepde::tasks

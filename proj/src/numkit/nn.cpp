#include "maepde/numkit/nn.hpp"

#include <cmath>

namespace maepde::numkit {

std::vector<NamedParam> Module::named_parameters() {
  std::vector<NamedParam> out;
  collect("", out);
  return out;
}

std::vector<Parameter*> Module::parameters() {
  std::vector<Parameter*> out;
  for (auto& np : named_parameters()) out.push_back(np.param);
  return out;
}

std::size_t Module::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->size();
  return n;
}

void Module::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void Module::set_trainable(bool on) {
  for (auto* p : parameters()) p->set_trainable(on);
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = uniform(rng, -bound, bound);
  return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool bias) : has_bias(bias) {
  weight = Parameter(uniform_tensor({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng));
  if (bias) this->bias = Parameter(Tensor(Shape{out}));
}

Var Linear::operator()(const Var& x) const { return linear(x, weight.var(), has_bias ? bias.var() : Var()); }

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({join(prefix, "weight"), &weight});
  if (has_bias) out.push_back({join(prefix, "bias"), &bias});
}

LayerNorm::LayerNorm(std::size_t dim) : gamma(Tensor(Shape{dim}, 1.0)), beta(Tensor(Shape{dim})) {}

void LayerNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({join(prefix, "gamma"), &gamma});
  out.push_back({join(prefix, "beta"), &beta});
}

Conv2d::Conv2d(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * kh * kw));
  weight = Parameter(uniform_tensor({cout, cin, kh, kw}, bound, rng));
  bias = Parameter(uniform_tensor({cout}, bound, rng));
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({join(prefix, "weight"), &weight});
  out.push_back({join(prefix, "bias"), &bias});
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng)
    : heads(heads), q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), proj(dim, dim, rng) {}

Var MultiHeadAttention::operator()(const Var& x, const std::vector<bool>& key_valid) const {
  return proj(attention(q(x), k(x), v(x), heads, key_valid));
}

void MultiHeadAttention::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  q.collect(join(prefix, "q"), out);
  k.collect(join(prefix, "k"), out);
  v.collect(join(prefix, "v"), out);
  proj.collect(join(prefix, "proj"), out);
}

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng)
    : ln1(dim), ln2(dim), attn(dim, heads, rng), fc1(dim, dim * mlp_ratio, rng), fc2(dim * mlp_ratio, dim, rng) {}

Var TransformerBlock::operator()(const Var& x, const std::vector<bool>& key_valid) const {
  Var h = add(x, attn(ln1(x), key_valid));
  return add(h, fc2(gelu(fc1(ln2(h)))));
}

void TransformerBlock::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  ln1.collect(join(prefix, "ln1"), out);
  attn.collect(join(prefix, "attn"), out);
  ln2.collect(join(prefix, "ln2"), out);
  fc1.collect(join(prefix, "fc1"), out);
  fc2.collect(join(prefix, "fc2"), out);
}

}  // namespace maepde::numkit

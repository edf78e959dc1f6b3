#pragma once

#include <memory>
#include <string>
#include <vector>

#include "maepde/numkit/ops.hpp"
#include "maepde/numkit/random.hpp"

namespace maepde::numkit {

struct NamedParam {
  std::string name;
  Parameter* param;
};

/// Base for parameter-holding layers. Subclasses list their own parameters
/// and children in collect().
class Module {
 public:
  virtual ~Module() = default;

  std::vector<NamedParam> named_parameters();
  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
  void zero_grad();
  void set_trainable(bool on);

  virtual void collect(const std::string& prefix, std::vector<NamedParam>& out) = 0;

 protected:
  static std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
  }
};

Tensor uniform_tensor(Shape shape, double bound, Rng& rng);

class Linear : public Module {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) override;

  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }

  Parameter weight;  // (in, out)
  Parameter bias;    // (out), empty when disabled
  bool has_bias = true;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Var operator()(const Var& x) const { return layer_norm(x, gamma.var(), beta.var()); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) override;

  Parameter gamma;
  Parameter beta;
};

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw, Rng& rng);

  Var operator()(const Var& x) const { return conv2d(x, weight.var(), bias.var()); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) override;

  Parameter weight;  // (cout, cin, kh, kw)
  Parameter bias;
};

class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng);

  Var operator()(const Var& x, const std::vector<bool>& key_valid = {}) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) override;

  std::size_t heads = 1;
  Linear q, k, v, proj;
};

/// Pre-norm transformer block with a GELU MLP of width mlp_ratio * dim.
class TransformerBlock : public Module {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng);

  Var operator()(const Var& x, const std::vector<bool>& key_valid = {}) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) override;

  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear fc1, fc2;
};

}  // namespace maepde::numkit

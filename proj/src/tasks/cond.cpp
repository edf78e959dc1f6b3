#include "maepde/tasks/cond.hpp"

namespace maepde::tasks {

using pdegen::Family;

const char* cond_name(CondSource s) {
  switch (s) {
    case CondSource::None: return "none";
    case CondSource::FrozenMae: return "mae-frozen";
    case CondSource::FinetunedMae: return "mae-finetune";
    case CondSource::RandomEnc: return "rand-enc";
    case CondSource::LinearCoeffs: return "linear";
  }
  return "?";
}

CondSource cond_from_name(const std::string& name) {
  for (auto s : {CondSource::None, CondSource::FrozenMae, CondSource::FinetunedMae, CondSource::RandomEnc,
                 CondSource::LinearCoeffs})
    if (name == cond_name(s)) return s;
  throw TaskError("unknown conditioning variant '" + name + "'");
}

std::vector<std::string> coefficient_names(Family f) {
  switch (f) {
    case Family::KdVBurgers: return {"alpha", "beta", "gamma"};
    case Family::Heat1D:
    case Family::KS1D: return {"nu"};
    case Family::Advection1D:
    case Family::Wave1D: return {"c"};
    case Family::Heat2D: return {"nu"};
    case Family::Advection2D: return {"cx", "cy"};
    case Family::Burgers2D: return {"nu", "cx", "cy"};
    case Family::NS2D: return {"nu", "A"};
    case Family::BurgersInviscid1D: return {};
  }
  return {};
}

std::vector<double> coefficient_vector(const PdeSpec& spec) {
  const auto names = coefficient_names(spec.family);
  if (names.empty()) throw TaskError(pdegen::family_name(spec.family) + " has no ground-truth coefficients");
  std::vector<double> v;
  for (const auto& n : names) v.push_back(spec.coeff(n));
  return v;
}

LinearCond::LinearCond(std::size_t n_coeffs, Rng& rng) : proj(n_coeffs, kCondDim, rng) {}

Var LinearCond::operator()(const std::vector<double>& coeffs) const {
  if (coeffs.size() != proj.in_features()) {
    throw TaskError("linear conditioning expects " + std::to_string(proj.in_features()) + " coefficients, got " +
                    std::to_string(coeffs.size()));
  }
  return proj(Var(Tensor({1, coeffs.size()}, coeffs)));
}

void LinearCond::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  proj.collect(join(prefix, "proj"), out);
}

MaeCond::MaeCond(std::shared_ptr<MaeModel> encoder, Standardizer stdz, bool frozen, Rng& rng)
    : proj(encoder->config().enc_dim, kCondDim, rng), encoder_(std::move(encoder)), stdz_(stdz), frozen_(frozen) {
  encoder_->set_trainable(!frozen);
}

MaeCond MaeCond::from_checkpoint(const maecore::Checkpoint& ck, bool frozen, Rng& rng,
                                 const std::optional<maecore::MaeConfig>& expected) {
  const auto cfg = ck.model_config();
  if (expected && (expected->window != cfg.window || expected->patch.pt != cfg.patch.pt ||
                   expected->patch.px != cfg.patch.px || expected->patch.py != cfg.patch.py ||
                   expected->enc_dim != cfg.enc_dim)) {
    throw TaskError("checkpoint/config mismatch");
  }
  auto model = std::make_shared<MaeModel>(maecore::model_from_checkpoint(ck));
  return MaeCond(std::move(model), ck.standardizer, frozen, rng);
}

Var MaeCond::operator()(const FieldSample& window, const Tensor* features) const {
  if (features && frozen_) return proj(Var(*features));
  const maecore::PatchSet ps = maecore::prepare_window(window, encoder_->config(), stdz_);
  Var cls = encoder_->encode(ps).cls();
  return proj(cls);
}

Tensor MaeCond::features(const FieldSample& window) const {
  numkit::NoGradGuard guard;
  return encoder_->encode(maecore::prepare_window(window, encoder_->config(), stdz_)).cls().value();
}

void MaeCond::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  proj.collect(join(prefix, "proj"), out);
  if (!frozen_) encoder_->collect(join(prefix, "encoder"), out);
}

Conditioner::Conditioner(const CondConfig& cfg, Family family, Rng& rng, const maecore::Checkpoint* ck,
                         const maecore::MaeConfig* mae_cfg)
    : cfg_(cfg) {
  const bool want_lin = cfg.source == CondSource::LinearCoeffs || (cfg.plus_linear && cfg.source != CondSource::None);
  switch (cfg.source) {
    case CondSource::None:
    case CondSource::LinearCoeffs: break;
    case CondSource::FrozenMae:
    case CondSource::FinetunedMae:
      if (!ck) throw TaskError(std::string(cond_name(cfg.source)) + " conditioning needs a pretrained checkpoint");
      mae_.emplace(MaeCond::from_checkpoint(*ck, cfg.source == CondSource::FrozenMae, rng));
      break;
    case CondSource::RandomEnc: {
      maecore::MaeConfig c = mae_cfg ? *mae_cfg : (ck ? ck->model_config() : maecore::MaeConfig{});
      c.init_seed = rng();
      mae_.emplace(std::make_shared<MaeModel>(c), ck ? ck->standardizer : Standardizer{}, false, rng);
      break;
    }
  }
  if (want_lin) {
    const auto names = coefficient_names(family);
    if (names.empty()) throw TaskError(pdegen::family_name(family) + " has no ground-truth coefficients");
    lin_.emplace(names.size(), rng);
  }
}

Var Conditioner::operator()(const FieldSample& window, const Tensor* features) const {
  Var out;
  if (mae_) out = (*mae_)(window, features);
  if (lin_) {
    Var l = (*lin_)(coefficient_vector(window.spec));
    out = out.defined() ? numkit::add(out, l) : l;
  }
  return out;
}

std::optional<Tensor> Conditioner::frozen_features(const FieldSample& window) const {
  if (!mae_ || !mae_->frozen()) return std::nullopt;
  return mae_->features(window);
}

void Conditioner::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  if (lin_) lin_->collect(join(prefix, "linear"), out);
  if (mae_) mae_->collect(join(prefix, "mae"), out);
}

}  // namespace maepde::tasks

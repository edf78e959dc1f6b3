#include "maepde/tasks/probe.hpp"

#include <algorithm>
#include <cmath>

#include "maepde/numkit/optim.hpp"

namespace maepde::tasks {

using pdegen::Boundary;
using pdegen::Family;

TaskSpec regression_task(Family family) {
  const auto names = coefficient_names(family);
  if (names.empty()) throw TaskError(pdegen::family_name(family) + " has no ground-truth coefficients");
  return {TaskKind::Regress, "coeffs_" + pdegen::family_name(family), names};
}

TaskSpec coefficient_task(std::vector<std::string> names) {
  std::string n = "coeffs";
  for (const auto& s : names) n += "_" + s;
  return {TaskKind::Regress, n, std::move(names)};
}

TaskSpec heat_bc_task() { return {TaskKind::Classify, "heat_bc", {"periodic", "dirichlet", "neumann"}}; }
TaskSpec wave_bc_task() { return {TaskKind::Classify, "wave_bc", {"dirichlet", "neumann"}}; }
TaskSpec pde_task() { return {TaskKind::Classify, "pdes", {"heat", "advection", "burgers", "ks"}}; }

std::vector<std::size_t> resolution_classes(bool two_d) {
  return two_d ? std::vector<std::size_t>{32, 40, 48, 56, 64} : std::vector<std::size_t>{50, 60, 70, 80, 90, 100};
}

TaskSpec resolution_task(bool two_d) {
  TaskSpec t{TaskKind::Classify, two_d ? "res_2d" : "res_1d", {}};
  for (auto n : resolution_classes(two_d)) t.targets.push_back(std::to_string(n));
  return t;
}

std::size_t class_label(const TaskSpec& task, const FieldSample& s) {
  if (task.kind != TaskKind::Classify) throw TaskError("class_label on a non-classification task");
  auto index_of = [&](const std::string& v) {
    const auto it = std::find(task.targets.begin(), task.targets.end(), v);
    if (it == task.targets.end()) throw TaskError("sample has no class '" + v + "' in task " + task.name);
    return static_cast<std::size_t>(it - task.targets.begin());
  };
  if (task.name == "heat_bc" || task.name == "wave_bc") return index_of(pdegen::boundary_name(s.spec.bc));
  if (task.name == "pdes") {
    switch (s.spec.family) {
      case Family::Heat1D: return index_of("heat");
      case Family::Advection1D: return index_of("advection");
      case Family::BurgersInviscid1D:
      case Family::KdVBurgers: return index_of("burgers");
      case Family::KS1D: return index_of("ks");
      default: break;
    }
    throw TaskError(pdegen::family_name(s.spec.family) + " is not one of the PDE classes");
  }
  if (task.name.rfind("res_", 0) == 0) return index_of(std::to_string(s.grid.nx));
  throw TaskError("unknown classification task " + task.name);
}

std::vector<double> regression_target(const TaskSpec& task, const FieldSample& s) {
  std::vector<double> out;
  for (const auto& n : task.targets) {
    if (!s.spec.coeffs.count(n)) {
      throw TaskError("regression target '" + n + "' is not a coefficient of " + pdegen::family_name(s.spec.family));
    }
    out.push_back(s.spec.coeffs.at(n));
  }
  return out;
}

const char* probe_variant_name(ProbeVariant v) {
  switch (v) {
    case ProbeVariant::Frozen: return "frozen";
    case ProbeVariant::Finetune: return "finetune";
    case ProbeVariant::Baseline: return "baseline";
  }
  return "?";
}

ProbeVariant probe_variant_from_name(const std::string& name) {
  for (auto v : {ProbeVariant::Frozen, ProbeVariant::Finetune, ProbeVariant::Baseline})
    if (name == probe_variant_name(v)) return v;
  throw TaskError("unknown probe variant '" + name + "'");
}

ProbeHead::ProbeHead(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

void ProbeHead::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  fc1.collect(join(prefix, "fc1"), out);
  fc2.collect(join(prefix, "fc2"), out);
}

ProbeModel::ProbeModel(std::shared_ptr<MaeModel> encoder, Standardizer stdz, ProbeVariant variant,
                       std::size_t out_dim, std::size_t hidden, Rng& rng)
    : head(encoder->config().enc_dim, hidden, out_dim, rng),
      encoder_(std::move(encoder)),
      stdz_(stdz),
      variant_(variant) {
  encoder_->set_trainable(variant != ProbeVariant::Frozen);
}

Var ProbeModel::features(const FieldSample& window) const {
  return encoder_->encode(maecore::prepare_window(window, encoder_->config(), stdz_)).cls();
}

void ProbeModel::collect(const std::string& prefix, std::vector<numkit::NamedParam>& out) {
  head.collect(join(prefix, "head"), out);
  if (variant_ != ProbeVariant::Frozen) encoder_->collect(join(prefix, "encoder"), out);
}

std::vector<ProbeExample> make_examples(const std::vector<FieldSample>& samples, const TaskSpec& task,
                                        std::size_t window, Rng& rng) {
  std::vector<ProbeExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.grid.nt < window) throw TaskError("sample shorter than the probe window");
    ProbeExample e;
    e.window = maecore::window_at(s, numkit::uniform_index(rng, s.grid.nt - window + 1), window);
    if (task.kind == TaskKind::Regress) e.target = regression_target(task, s);
    else e.label = class_label(task, s);
    out.push_back(std::move(e));
  }
  return out;
}

ProbeResult train_probe(const ProbeConfig& cfg, const TaskSpec& task, const maecore::Checkpoint* ck,
                        const maecore::MaeConfig& arch, const std::vector<ProbeExample>& train,
                        const std::vector<ProbeExample>& val) {
  if (task.kind != TaskKind::Regress && task.kind != TaskKind::Classify) {
    throw TaskError("probing supports regression and classification tasks");
  }
  if (train.empty() || val.empty()) throw TaskError("probe needs non-empty train and validation sets");
  const bool regress = task.kind == TaskKind::Regress;
  for (const auto* set : {&train, &val})
    for (const auto& e : *set) {
      if (regress && e.target.size() != task.out_dim()) {
        throw TaskError("target/head dim mismatch: " + std::to_string(e.target.size()) + " targets for a head of " +
                        std::to_string(task.out_dim()));
      }
      if (!regress && e.label >= task.out_dim()) throw TaskError("target/head dim mismatch: label out of range");
    }

  std::shared_ptr<MaeModel> encoder;
  Standardizer stdz;
  if (cfg.variant == ProbeVariant::Baseline || !ck) {
    if (cfg.variant != ProbeVariant::Baseline) throw TaskError("frozen and finetune probes need a pretrained checkpoint");
    maecore::MaeConfig c = ck ? ck->model_config() : arch;
    c.init_seed = numkit::derive_seed(cfg.seed, 0x42);
    encoder = std::make_shared<MaeModel>(c);
    if (ck) stdz = ck->standardizer;
  } else {
    encoder = std::make_shared<MaeModel>(maecore::model_from_checkpoint(*ck));
    stdz = ck->standardizer;
  }
  Rng rng(numkit::derive_seed(cfg.seed, 0x50524f42));
  ProbeModel model(encoder, stdz, cfg.variant, task.out_dim(), cfg.hidden, rng);

  // Regression targets are z-scored with training statistics.
  const std::size_t nd = task.out_dim();
  std::vector<double> mu(nd, 0.0), sd(nd, 0.0);
  if (regress) {
    for (const auto& e : train)
      for (std::size_t k = 0; k < nd; ++k) mu[k] += e.target[k] / static_cast<double>(train.size());
    for (const auto& e : train)
      for (std::size_t k = 0; k < nd; ++k) sd[k] += std::pow(e.target[k] - mu[k], 2) / static_cast<double>(train.size());
    for (auto& s : sd) s = s > 0.0 ? std::sqrt(s) : 1.0;
  }

  const bool frozen = cfg.variant == ProbeVariant::Frozen;
  std::vector<Tensor> cached;
  if (frozen) {
    numkit::NoGradGuard guard;
    for (const auto& e : train) cached.push_back(model.features(e.window).value());
  }
  auto features = [&](std::size_t i) { return frozen ? Var(cached[i]) : model.features(train[i].window); };
  auto example_loss = [&](const Var& out, const ProbeExample& e) {
    if (!regress) return numkit::cross_entropy(numkit::reshape(out, {nd}), e.label);
    Tensor t({1, nd});
    for (std::size_t k = 0; k < nd; ++k) t[k] = (e.target[k] - mu[k]) / sd[k];
    return numkit::mse(out, Var(t));
  };

  numkit::AdamW opt(model.parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::size_t bs = std::max<std::size_t>(1, std::min(cfg.batch_size, train.size()));
  const std::size_t total = cfg.epochs * ((train.size() + bs - 1) / bs);
  Rng order_rng(numkit::derive_seed(cfg.seed, 1));
  ProbeResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = numkit::permutation(order_rng, train.size());
    double acc = 0.0;
    for (std::size_t b0 = 0; b0 < train.size(); b0 += bs) {
      const std::size_t b1 = std::min(train.size(), b0 + bs);
      opt.zero_grad();
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t i = order[b];
        Var loss = example_loss(model.head(features(i)), train[i]);
        acc += loss.value()[0];
        loss.backward(1.0 / static_cast<double>(b1 - b0));
      }
      opt.step(numkit::one_cycle_lr(step++, total, cfg.lr));
    }
    result.epoch_loss.push_back(acc / static_cast<double>(train.size()));
  }

  numkit::NoGradGuard guard;
  if (regress) {
    double se = 0.0, se_base = 0.0;
    for (const auto& e : val) {
      const Tensor out = model.forward(e.window).value();
      for (std::size_t k = 0; k < nd; ++k) {
        se += std::pow(out[k] * sd[k] + mu[k] - e.target[k], 2);
        se_base += std::pow(mu[k] - e.target[k], 2);
      }
    }
    const double n = static_cast<double>(val.size() * nd);
    result.metric = std::sqrt(se / n);
    result.baseline = std::sqrt(se_base / n);
  } else {
    std::vector<std::size_t> counts(nd, 0);
    for (const auto& e : train) ++counts[e.label];
    const std::size_t majority = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::size_t correct = 0, base = 0;
    for (const auto& e : val) {
      const Tensor out = model.forward(e.window).value();
      const auto pred = static_cast<std::size_t>(std::max_element(out.values().begin(), out.values().end()) -
                                                 out.values().begin());
      correct += pred == e.label;
      base += majority == e.label;
    }
    result.metric = static_cast<double>(correct) / static_cast<double>(val.size());
    result.baseline = static_cast<double>(base) / static_cast<double>(val.size());
  }
  return result;
}

}  // namespace maepde::tasks

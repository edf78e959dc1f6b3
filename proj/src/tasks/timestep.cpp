#include "maepde/tasks/timestep.hpp"

#include <cmath>
#include <numeric>

#include "maepde/bench/metrics.hpp"
#include "maepde/numkit/optim.hpp"
#include "maepde/numkit/parallel.hpp"

namespace maepde::tasks {

using numkit::Shape;

Tensor slice_steps(const Tensor& traj, std::size_t start, std::size_t len) {
  if (start + len > traj.dim(0)) {
    throw TaskError("steps [" + std::to_string(start) + ", " + std::to_string(start + len) + ") exceed a trajectory of " +
                    std::to_string(traj.dim(0)));
  }
  Shape shape = traj.shape();
  shape[0] = len;
  const std::size_t plane = traj.size() / traj.dim(0);
  Tensor out(shape);
  std::copy(traj.data() + start * plane, traj.data() + (start + len) * plane, out.data());
  return out;
}

namespace {

// The last k steps of [a, b] along the leading axis.
Tensor last_steps(const Tensor& a, const Tensor& b, std::size_t k) {
  const std::size_t plane = a.size() / a.dim(0);
  std::vector<double> all(a.values().begin(), a.values().end());
  all.insert(all.end(), b.values().begin(), b.values().end());
  Shape shape = a.shape();
  shape[0] = k;
  return Tensor(shape, std::vector<double>(all.end() - static_cast<long>(k * plane), all.end()));
}

}  // namespace

Tensor rollout(const StepFn& step, const Tensor& init, std::size_t horizon, std::size_t chunk) {
  if (chunk == 0 || horizon % chunk != 0) {
    throw TaskError("rollout horizon " + std::to_string(horizon) + " is not divisible by chunk " + std::to_string(chunk));
  }
  const std::size_t in_steps = init.dim(0);
  const std::size_t plane = init.size() / in_steps;
  std::vector<double> all(init.values().begin(), init.values().end());
  all.reserve((in_steps + horizon) * plane);
  Shape win_shape = init.shape();
  for (std::size_t done = 0; done < horizon; done += chunk) {
    Tensor window(win_shape, std::vector<double>(all.end() - static_cast<long>(in_steps * plane), all.end()));
    const Tensor next = step(window);
    if (next.dim(0) != chunk || next.size() != chunk * plane) {
      throw TaskError("model returned " + numkit::shape_str(next.shape()) + ", expected " + std::to_string(chunk) +
                      " steps");
    }
    all.insert(all.end(), next.values().begin(), next.values().end());
  }
  Shape out_shape = init.shape();
  out_shape[0] = horizon;
  return Tensor(out_shape, std::vector<double>(all.begin() + static_cast<long>(in_steps * plane), all.end()));
}

Tensor rollout(const Stepper& model, const Tensor& init, const Var& cond, std::size_t horizon) {
  numkit::NoGradGuard guard;
  return rollout([&](const Tensor& w) { return model.forward(Var(w), cond).value(); }, init, horizon,
                 model.out_steps());
}

Var pushforward_loss(const Stepper& model, const Tensor& traj, std::size_t start, const Var& cond, bool pushforward) {
  const std::size_t k = model.in_steps(), c = model.out_steps();
  const std::size_t need = start + k + c * (pushforward ? 2 : 1);
  if (need > traj.dim(0)) {
    throw TaskError("trajectory of " + std::to_string(traj.dim(0)) + " steps is too short for " +
                    (pushforward ? "pushforward" : "one-step") + " training from step " + std::to_string(start));
  }
  Tensor input = slice_steps(traj, start, k);
  std::size_t target_start = start + k;
  if (pushforward) {
    Tensor pred;
    {
      numkit::NoGradGuard guard;
      pred = model.forward(Var(input), cond).value();
    }
    input = last_steps(input, pred, k);
    target_start += c;
  }
  const Var out = model.forward(Var(input), cond);
  return numkit::mse(out, Var(slice_steps(traj, target_start, c)));
}

const char* solver_name(SolverKind k) { return k == SolverKind::Fno ? "fno" : "unet"; }

SolverKind solver_from_name(const std::string& name) {
  if (name == "fno") return SolverKind::Fno;
  if (name == "unet") return SolverKind::Unet;
  throw TaskError("unknown solver '" + name + "'");
}

nlohmann::json to_json(const TimestepConfig& c) {
  return {{"solver", solver_name(c.solver)},
          {"fno", {{"width", c.fno.width}, {"modes", c.fno.modes}, {"layers", c.fno.layers}, {"two_d", c.fno.two_d}}},
          {"unet", {{"hidden", c.unet.hidden}, {"mults", c.unet.mults}, {"groups", c.unet.groups}, {"two_d", c.unet.two_d}}},
          {"cond", {{"source", cond_name(c.cond.source)}, {"plus_linear", c.cond.plus_linear}}},
          {"window", c.window},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"pushforward", c.pushforward},
          {"pushforward_probability", c.pushforward_probability},
          {"seed", c.seed},
          {"deterministic", c.deterministic}};
}

TimestepConfig timestep_config_from_json(const nlohmann::json& j) {
  TimestepConfig c;
  if (j.contains("solver")) c.solver = solver_from_name(j.at("solver").get<std::string>());
  if (j.contains("fno")) {
    const auto& f = j.at("fno");
    c.fno.width = f.value("width", c.fno.width);
    c.fno.modes = f.value("modes", c.fno.modes);
    c.fno.layers = f.value("layers", c.fno.layers);
    c.fno.two_d = f.value("two_d", c.fno.two_d);
  }
  if (j.contains("unet")) {
    const auto& u = j.at("unet");
    c.unet.hidden = u.value("hidden", c.unet.hidden);
    c.unet.mults = u.value("mults", c.unet.mults);
    c.unet.groups = u.value("groups", c.unet.groups);
    c.unet.two_d = u.value("two_d", c.unet.two_d);
  }
  if (j.contains("cond")) {
    c.cond.source = cond_from_name(j.at("cond").value("source", std::string("none")));
    c.cond.plus_linear = j.at("cond").value("plus_linear", false);
  }
  c.window = j.value("window", c.window);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.pushforward = j.value("pushforward", c.pushforward);
  c.pushforward_probability = j.value("pushforward_probability", c.pushforward_probability);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  return c;
}

Var TimestepModel::condition(const FieldSample& window) const { return cond ? (*cond)(window) : Var(); }

std::vector<numkit::Parameter*> TimestepModel::parameters() {
  auto p = solver->parameters();
  if (cond) {
    auto q = cond->parameters();
    p.insert(p.end(), q.begin(), q.end());
  }
  return p;
}

TimestepModel make_timestep_model(const TimestepConfig& cfg, pdegen::Family family, const Standardizer& stdz,
                                  const maecore::Checkpoint* ck) {
  TimestepModel m;
  m.stdz = stdz;
  m.window = cfg.window;
  Rng rng(numkit::derive_seed(cfg.seed, 0x434f4e44));
  m.cond = std::make_unique<Conditioner>(cfg.cond, family, rng, ck);
  if (m.cond->window() && m.cond->window() != cfg.window) {
    throw TaskError("checkpoint/config mismatch: encoder window " + std::to_string(m.cond->window()) +
                    " differs from the time-stepping window " + std::to_string(cfg.window));
  }
  const std::size_t cond_dim = m.cond->active() ? kCondDim : 0;
  if (cfg.solver == SolverKind::Fno) {
    FnoConfig f = cfg.fno;
    f.in_steps = f.out_steps = cfg.window;
    f.cond_dim = cond_dim;
    f.init_seed = numkit::derive_seed(cfg.seed, 1);
    m.solver = std::make_unique<Fno>(f);
  } else {
    UnetConfig u = cfg.unet;
    u.in_steps = u.out_steps = cfg.window;
    u.cond_dim = cond_dim;
    u.init_seed = numkit::derive_seed(cfg.seed, 1);
    m.solver = std::make_unique<Unet>(u);
  }
  return m;
}

std::vector<double> evaluate_rollouts(const TimestepModel& m, const std::vector<FieldSample>& samples,
                                      std::size_t workers) {
  std::vector<double> out(samples.size());
  numkit::parallel_for(
      samples.size(),
      [&](std::size_t i) {
        numkit::NoGradGuard guard;
        const FieldSample& s = samples[i];
        const std::size_t k = m.window;
        if (s.grid.nt < 2 * k) throw TaskError("validation trajectory shorter than two windows");
        const std::size_t horizon = (s.grid.nt - k) / k * k;
        const Var cond = m.condition(maecore::window_at(s, 0, k));
        const Tensor init = m.stdz.apply(slice_steps(s.u, 0, k));
        const Tensor pred = m.stdz.invert(rollout(*m.solver, init, cond, horizon));
        out[i] = bench::nrmse(pred, slice_steps(s.u, k, horizon));
      },
      workers);
  return out;
}

TimestepResult train_timestep(const TimestepConfig& cfg, const std::vector<FieldSample>& train,
                              const std::vector<FieldSample>& val, const maecore::Checkpoint* ck,
                              const std::function<void(std::size_t, double)>& on_epoch) {
  if (train.empty()) throw TaskError("empty training set");
  const Standardizer stdz = Standardizer::fit(train);
  TimestepModel m = make_timestep_model(cfg, train.front().spec.family, stdz, ck);
  const std::size_t k = cfg.window;
  std::vector<Tensor> trajs;
  for (const auto& s : train) {
    if (s.grid.nt < 3 * k) throw TaskError("training trajectory shorter than three windows");
    trajs.push_back(stdz.apply(s.u));
  }
  // Each trajectory is conditioned on its first window, as in evaluation.
  std::vector<FieldSample> cond_windows;
  std::vector<std::optional<Tensor>> cached;
  for (const auto& s : train) {
    cond_windows.push_back(maecore::window_at(s, 0, k));
    cached.push_back(m.cond ? m.cond->frozen_features(cond_windows.back()) : std::nullopt);
  }

  numkit::AdamW opt(m.parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::size_t bs = std::max<std::size_t>(1, std::min(cfg.batch_size, train.size()));
  const std::size_t steps_per_epoch = (train.size() + bs - 1) / bs;
  const std::size_t total = steps_per_epoch * cfg.epochs;
  Rng order_rng(numkit::derive_seed(cfg.seed, 2));
  TimestepResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = numkit::permutation(order_rng, train.size());
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < train.size(); b0 += bs) {
      const std::size_t b1 = std::min(train.size(), b0 + bs);
      const double w = 1.0 / static_cast<double>(b1 - b0);
      opt.zero_grad();
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t idx = order[b];
        Rng rng(numkit::derive_seed(numkit::derive_seed(cfg.seed, 3 + epoch), idx));
        const bool pf = cfg.pushforward && numkit::uniform(rng, 0.0, 1.0) < cfg.pushforward_probability;
        const std::size_t span = k * (pf ? 3 : 2);
        const std::size_t start = numkit::uniform_index(rng, trajs[idx].dim(0) - span + 1);
        const Var cond = m.cond ? (*m.cond)(cond_windows[idx], cached[idx] ? &*cached[idx] : nullptr) : Var();
        Var loss = pushforward_loss(*m.solver, trajs[idx], start, cond, pf);
        if (!std::isfinite(loss.value()[0])) {
          throw TaskError("non-finite time-stepping loss at epoch " + std::to_string(epoch));
        }
        epoch_loss += loss.value()[0];
        loss.backward(w);
      }
      opt.step(numkit::one_cycle_lr(step++, total, cfg.lr));
    }
    epoch_loss /= static_cast<double>(train.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  if (!val.empty()) {
    result.val_nrmse = evaluate_rollouts(m, val, cfg.deterministic ? 1 : cfg.workers);
    result.mean_nrmse = std::accumulate(result.val_nrmse.begin(), result.val_nrmse.end(), 0.0) /
                        static_cast<double>(result.val_nrmse.size());
  }
  return result;
}

}  // namespace maepde::tasks

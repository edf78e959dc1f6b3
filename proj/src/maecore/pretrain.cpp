#include "maepde/maecore/pretrain.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "maepde/numkit/parallel.hpp"

namespace maepde::maecore {

using nlohmann::json;

Standardizer Standardizer::fit(const std::vector<FieldSample>& samples) {
  if (samples.empty()) throw MaeError("Standardizer::fit on an empty dataset");
  double n = 0.0, s = 0.0, s2 = 0.0;
  for (const auto& f : samples)
    for (double v : f.u.values()) {
      s += v;
      n += 1.0;
    }
  const double mean = s / n;
  for (const auto& f : samples)
    for (double v : f.u.values()) s2 += (v - mean) * (v - mean);
  Standardizer st;
  st.mean = mean;
  st.std = std::sqrt(s2 / n);
  if (!(st.std > 0.0)) st.std = 1.0;
  return st;
}

Tensor Standardizer::apply(const Tensor& u) const {
  Tensor z = u;
  for (auto& v : z.values()) v = (v - mean) / std;
  return z;
}

Tensor Standardizer::invert(const Tensor& z) const {
  Tensor u = z;
  for (auto& v : u.values()) v = v * std + mean;
  return u;
}

json to_json(const MaeConfig& c) {
  return json{{"enc_dim", c.enc_dim},     {"enc_depth", c.enc_depth}, {"enc_heads", c.enc_heads},
              {"dec_dim", c.dec_dim},     {"dec_depth", c.dec_depth}, {"dec_heads", c.dec_heads},
              {"mlp_ratio", c.mlp_ratio}, {"patch", {c.patch.pt, c.patch.px, c.patch.py}},
              {"mask_ratio", c.mask_ratio}, {"window", c.window},
              {"multires", multires_name(c.multires)}, {"max_nx", c.max_nx}, {"max_ny", c.max_ny},
              {"masked_only_loss", c.masked_only_loss}, {"init_seed", c.init_seed}};
}

MaeConfig mae_config_from_json(const json& j) {
  MaeConfig c = j.contains("patch") && j["patch"].size() == 3 && j["patch"][2].get<std::size_t>() > 0
                    ? MaeConfig::defaults_2d()
                    : MaeConfig{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("enc_dim", c.enc_dim);
  get("enc_depth", c.enc_depth);
  get("enc_heads", c.enc_heads);
  get("dec_dim", c.dec_dim);
  get("dec_depth", c.dec_depth);
  get("dec_heads", c.dec_heads);
  get("mlp_ratio", c.mlp_ratio);
  if (j.contains("patch")) {
    const auto& p = j.at("patch");
    c.patch = {p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(), p.size() > 2 ? p.at(2).get<std::size_t>() : 0};
  }
  get("mask_ratio", c.mask_ratio);
  get("window", c.window);
  if (j.contains("multires")) c.multires = multires_from_name(j.at("multires").get<std::string>());
  get("max_nx", c.max_nx);
  get("max_ny", c.max_ny);
  get("masked_only_loss", c.masked_only_loss);
  get("init_seed", c.init_seed);
  return c;
}

json to_json(const PretrainConfig& c) {
  return json{{"model", to_json(c.model)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"augment_probability", c.augment_probability},
              {"val_fraction", c.val_fraction},
              {"seed", c.seed},
              {"deterministic", c.deterministic},
              {"workers", c.workers}};
}

PretrainConfig pretrain_config_from_json(const json& j) {
  PretrainConfig c;
  if (j.contains("model")) c.model = mae_config_from_json(j.at("model"));
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("augment_probability", c.augment_probability);
  get("val_fraction", c.val_fraction);
  get("seed", c.seed);
  get("deterministic", c.deterministic);
  get("workers", c.workers);
  return c;
}

namespace {

constexpr char kMagic[5] = {'P', 'D', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw MaeError("checkpoint " + path + ": truncated");
  return v;
}

void put_values(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void take_values(std::istream& is, Tensor& t, const std::string& path) {
  if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
    throw MaeError("checkpoint " + path + ": truncated payload");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  json header;
  header["config"] = ck.config;
  header["standardizer"] = {ck.standardizer.mean, ck.standardizer.std};
  json params = json::array();
  for (const auto& [name, t] : ck.params) params.push_back({{"name", name}, {"shape", t.shape()}});
  header["params"] = params;
  header["optimizer_step"] = ck.optimizer.step;
  header["has_moments"] = !ck.optimizer.m.empty();
  header["rng_state"] = ck.rng_state;
  header["epoch"] = ck.epoch;
  // Losses travel as raw bit patterns so the curve survives the roundtrip exactly.
  std::vector<std::uint64_t> bits(ck.step_losses.size());
  std::memcpy(bits.data(), ck.step_losses.data(), bits.size() * sizeof(double));
  header["step_loss_bits"] = bits;
  std::uint64_t val_bits;
  std::memcpy(&val_bits, &ck.val_loss, sizeof(double));
  header["val_loss_bits"] = val_bits;
  json log = json::array();
  for (const auto& e : ck.log) log.push_back({e.epoch, e.train_loss, e.val_loss, e.lr});
  header["log"] = log;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw MaeError("cannot write checkpoint " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ck.params) put_values(os, t);
  if (!ck.optimizer.m.empty()) {
    for (const auto& t : ck.optimizer.m) put_values(os, t);
    for (const auto& t : ck.optimizer.v) put_values(os, t);
  }
  if (!os) throw MaeError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MaeError("cannot open checkpoint " + path);
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0) throw MaeError("checkpoint " + path + ": bad magic");
  if (take<std::uint32_t>(is, path) != kVersion) throw MaeError("checkpoint " + path + ": version mismatch");
  const auto len = take<std::uint32_t>(is, path);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw MaeError("checkpoint " + path + ": truncated header");
  const json header = json::parse(text);

  Checkpoint ck;
  ck.config = header.at("config");
  ck.standardizer.mean = header.at("standardizer").at(0).get<double>();
  ck.standardizer.std = header.at("standardizer").at(1).get<double>();
  for (const auto& p : header.at("params")) {
    Tensor t(p.at("shape").get<Shape>());
    take_values(is, t, path);
    ck.params.emplace_back(p.at("name").get<std::string>(), std::move(t));
  }
  ck.optimizer.step = header.at("optimizer_step").get<std::size_t>();
  if (header.at("has_moments").get<bool>()) {
    for (auto* moments : {&ck.optimizer.m, &ck.optimizer.v})
      for (const auto& [name, t] : ck.params) {
        Tensor m(t.shape());
        take_values(is, m, path);
        moments->push_back(std::move(m));
      }
  }
  ck.rng_state = header.at("rng_state").get<std::string>();
  ck.epoch = header.at("epoch").get<std::size_t>();
  const auto bits = header.at("step_loss_bits").get<std::vector<std::uint64_t>>();
  ck.step_losses.resize(bits.size());
  std::memcpy(ck.step_losses.data(), bits.data(), bits.size() * sizeof(double));
  const auto val_bits = header.at("val_loss_bits").get<std::uint64_t>();
  std::memcpy(&ck.val_loss, &val_bits, sizeof(double));
  for (const auto& e : header.at("log")) {
    ck.log.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<double>()});
  }
  return ck;
}

std::vector<std::pair<std::string, Tensor>> snapshot(MaeModel& model) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& np : model.named_parameters()) out.emplace_back(np.name, np.param->value());
  return out;
}

void restore(MaeModel& model, const std::vector<std::pair<std::string, Tensor>>& params) {
  auto named = model.named_parameters();
  if (named.size() != params.size()) throw MaeError("checkpoint/config mismatch: parameter count differs");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].name != params[i].first || named[i].param->shape() != params[i].second.shape()) {
      throw MaeError("checkpoint/config mismatch at parameter " + named[i].name);
    }
    named[i].param->value() = params[i].second;
  }
}

MaeModel model_from_checkpoint(const Checkpoint& ck) {
  MaeModel m(ck.model_config());
  restore(m, ck.params);
  return m;
}

PatchSet prepare_example(const FieldSample& s, const MaeConfig& cfg, const Standardizer& stdz,
                         double augment_probability, double mask_ratio, Rng& rng, long window_start) {
  if (s.grid.nt < cfg.window) throw MaeError("trajectory shorter than the MAE time window");
  const std::size_t room = s.grid.nt - cfg.window + 1;
  const std::size_t start = window_start < 0 ? numkit::uniform_index(rng, room) : static_cast<std::size_t>(window_start);
  FieldSample w = liesym::time_shift(s, cfg.window, static_cast<double>(start) * s.grid.dt());
  if (augment_probability > 0.0 && w.grid.periodic) {
    w = liesym::augment(w, liesym::default_config(w, augment_probability), rng);
  }
  PatchSet ps = patchify(stdz.apply(w.u), cfg.patch);
  ps.grid = w.grid;
  apply_mask(ps, mask_ratio, rng);
  return ps;
}

FieldSample window_at(const FieldSample& s, std::size_t start, std::size_t len) {
  if (start + len > s.grid.nt) {
    throw MaeError("window [" + std::to_string(start) + ", " + std::to_string(start + len) + ") exceeds " +
                   std::to_string(s.grid.nt) + " steps");
  }
  return liesym::time_shift(s, len, static_cast<double>(start) * s.grid.dt());
}

PatchSet prepare_window(const FieldSample& window, const MaeConfig& cfg, const Standardizer& stdz) {
  if (window.grid.nt != cfg.window) {
    throw MaeError("window has " + std::to_string(window.grid.nt) + " steps, model expects " + std::to_string(cfg.window));
  }
  PatchSet ps = patchify(stdz.apply(window.u), cfg.patch);
  ps.grid = window.grid;
  return ps;
}

double batch_loss(const MaeModel& model, const std::vector<PatchSet>& batch, bool backward) {
  double total = 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& ps : batch) {
    Var loss = mae_loss(model.decode_patches(model.encode(ps), ps), ps, model.config().masked_only_loss);
    total += loss.value()[0];
    if (backward) loss.backward(w);
  }
  return total * w;
}

double evaluate_reconstruction(const MaeModel& model, const std::vector<FieldSample>& samples,
                               const Standardizer& stdz, double mask_ratio, std::uint64_t seed) {
  if (samples.empty()) throw MaeError("evaluate_reconstruction on an empty set");
  numkit::NoGradGuard guard;
  std::vector<double> losses(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng(numkit::derive_seed(seed, i));
    const std::size_t room = samples[i].grid.nt - model.config().window + 1;
    const long start = static_cast<long>(numkit::uniform_index(rng, room));
    const PatchSet ps = prepare_example(samples[i], model.config(), stdz, 0.0, mask_ratio, rng, start);
    losses[i] = mae_loss(model.decode_patches(model.encode(ps), ps), ps).value()[0];
  }
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(losses.size());
}

PretrainResult pretrain(const PretrainConfig& cfg, const std::vector<FieldSample>& train,
                        const std::vector<FieldSample>& val, const std::function<void(const EpochLog&)>& on_epoch) {
  if (train.empty()) throw MaeError("pretrain: empty training set");
  for (const auto& s : train)
    if (s.grid.nt < cfg.model.window) throw MaeError("pretrain: trajectory shorter than the window");
  const Standardizer stdz = Standardizer::fit(train);
  MaeModel model(cfg.model);
  auto params = model.parameters();
  numkit::AdamWConfig acfg;
  acfg.weight_decay = cfg.weight_decay;
  numkit::AdamW opt(params, acfg);

  const std::size_t bs = std::min(cfg.batch_size, train.size());
  const std::size_t steps_per_epoch = (train.size() + bs - 1) / bs;
  const std::size_t total = cfg.epochs * steps_per_epoch;
  const std::size_t workers = cfg.deterministic ? 1 : (cfg.workers ? cfg.workers : numkit::worker_count());
  Rng order_rng(numkit::derive_seed(cfg.seed, 1));

  PretrainResult result;
  Checkpoint ck;
  ck.config = to_json(cfg);
  ck.standardizer = stdz;
  double best = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = numkit::permutation(order_rng, train.size());
    double epoch_loss = 0.0, lr = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * bs, hi = std::min(lo + bs, train.size());
      std::vector<PatchSet> batch(hi - lo);
      numkit::parallel_for(
          batch.size(),
          [&](std::size_t k) {
            const std::size_t idx = order[lo + k];
            Rng rng(numkit::derive_seed(numkit::derive_seed(cfg.seed, 2 + epoch), idx));
            batch[k] = prepare_example(train[idx], cfg.model, stdz, cfg.augment_probability, cfg.model.mask_ratio, rng);
          },
          workers);
      opt.zero_grad();
      const double loss = batch_loss(model, batch, true);
      if (!std::isfinite(loss)) {
        throw MaeError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      lr = numkit::one_cycle_lr(step, total, cfg.lr);
      opt.step(lr);
      ++step;
      ck.step_losses.push_back(loss);
      epoch_loss += loss * static_cast<double>(batch.size());
    }
    EpochLog log{epoch, epoch_loss / static_cast<double>(train.size()), 0.0, lr};
    log.val_loss = val.empty() ? log.train_loss
                               : evaluate_reconstruction(model, val, stdz, cfg.model.mask_ratio, numkit::derive_seed(cfg.seed, 3));
    ck.log.push_back(log);
    if (on_epoch) on_epoch(log);

    ck.params = snapshot(model);
    ck.optimizer = opt.state();
    std::ostringstream rs;
    rs << order_rng;
    ck.rng_state = rs.str();
    ck.epoch = epoch;
    ck.val_loss = log.val_loss;
    if (log.val_loss < best) {
      best = log.val_loss;
      result.best = ck;
    }
  }
  result.last = ck;
  // The best snapshot carries the full curve for reporting.
  result.best.step_losses = ck.step_losses;
  result.best.log = ck.log;
  return result;
}

PretrainResult pretrain(const PretrainConfig& cfg, const std::vector<FieldSample>& dataset,
                        const std::function<void(const EpochLog&)>& on_epoch) {
  if (dataset.size() < 2) throw MaeError("pretrain: need at least two samples to split");
  Rng rng(numkit::derive_seed(cfg.seed, 0));
  const auto perm = numkit::permutation(rng, dataset.size());
  auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(dataset.size())));
  n_val = std::min(n_val, dataset.size() - 1);
  std::vector<FieldSample> train, val;
  for (std::size_t i = 0; i < perm.size(); ++i) (i < n_val ? val : train).push_back(dataset[perm[i]]);
  return pretrain(cfg, train, val, on_epoch);
}

}  // namespace maepde::maecore

// maepde: dataset generation, augmentation, pretraining and downstream evaluation.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "maepde/bench/container.hpp"
#include "maepde/bench/latent.hpp"
#include "maepde/numkit/parallel.hpp"
#include "maepde/tasks/probe.hpp"
#include "maepde/tasks/sr.hpp"
#include "maepde/tasks/timestep.hpp"

using namespace maepde;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  bool deterministic = false;
};

json load_config(const Globals& g) {
  if (g.config_path.empty()) return json::object();
  std::ifstream in(g.config_path);
  if (!in) throw std::runtime_error("cannot open config " + g.config_path);
  return json::parse(in, nullptr, true, true);
}

// The section named `key` when present, else the whole file.
json section(const json& cfg, const std::string& key) {
  if (cfg.contains(key)) return cfg.at(key);
  return cfg;
}

json merged(json base, const json& patch) {
  base.merge_patch(patch);
  return base;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<pdegen::FieldSample> read_datasets(const std::vector<std::string>& paths) {
  std::vector<pdegen::FieldSample> all;
  for (const auto& p : paths) {
    auto ds = bench::dataset_read(p);
    std::move(ds.samples.begin(), ds.samples.end(), std::back_inserter(all));
  }
  if (all.empty()) throw std::runtime_error("no samples in the given datasets");
  return all;
}

// Deterministic train/validation split by a seeded permutation.
std::pair<std::vector<pdegen::FieldSample>, std::vector<pdegen::FieldSample>> split_samples(
    const std::vector<pdegen::FieldSample>& all, double val_fraction, std::uint64_t seed) {
  numkit::Rng rng(numkit::derive_seed(seed, 0x73706c6974));
  const auto perm = numkit::permutation(rng, all.size());
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(val_fraction * all.size())));
  if (n_val >= all.size()) throw std::runtime_error("validation split leaves no training samples");
  std::vector<pdegen::FieldSample> train, val;
  for (std::size_t i = 0; i < perm.size(); ++i) (i < n_val ? val : train).push_back(all[perm[i]]);
  return {train, val};
}

void write_report(const std::string& path, const json& report) {
  if (path.empty()) return;
  if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report.dump(2) << "\n";
}

json header(const std::string& command, const Globals& g, const json& config) {
  return {{"command", command},
          {"seed", g.seed},
          {"deterministic", g.deterministic},
          {"workers", numkit::worker_count()},
          {"config", config}};
}

std::optional<maecore::Checkpoint> maybe_checkpoint(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return maecore::load_checkpoint(path);
}

// ---- generate ----

struct GenerateArgs {
  std::string families = "kdv_burgers";
  std::string bcs = "periodic";
  std::size_t count = 100;
  std::size_t nt = 0, nx = 0, ny = 0;
  double t1 = 0.0;
  std::string resolutions;
  std::string out;
};

pdegen::FieldSample generate_one(pdegen::Family f, pdegen::Boundary bc, const GenerateArgs& a, std::size_t res,
                                 numkit::Rng& rng) {
  auto grid = pdegen::default_grid(f, bc);
  if (a.nt) grid.nt = a.nt;
  if (a.nx) grid.nx = a.nx;
  if (a.ny && grid.two_d()) grid.ny = a.ny;
  if (a.t1 > 0.0) grid.t1 = a.t1;
  const auto spec = pdegen::sample_spec(f, rng, bc);
  if (res == 0) return pdegen::solve(spec, grid);
  // Solve on the smallest multiple of the target at or above the base grid,
  // then subsample with a whole stride.
  const std::size_t base = grid.nx;
  grid.nx = res * ((base + res - 1) / res);
  if (grid.two_d()) grid.ny = grid.nx;
  return pdegen::downsample(pdegen::solve(spec, grid), res, grid.two_d() ? res : 0);
}

int run_generate(const Globals& g, const GenerateArgs& a) {
  if (a.out.empty()) throw std::runtime_error("--out is required");
  std::vector<pdegen::Family> fams;
  for (const auto& n : split(a.families)) fams.push_back(pdegen::family_from_name(n));
  std::vector<pdegen::Boundary> bcs;
  for (const auto& n : split(a.bcs)) bcs.push_back(pdegen::boundary_from_name(n));
  std::vector<std::size_t> res;
  for (const auto& r : split(a.resolutions)) res.push_back(std::stoul(r));
  if (fams.empty() || bcs.empty()) throw std::runtime_error("need at least one family and boundary condition");

  bench::Dataset ds;
  ds.master_seed = g.seed;
  ds.config = {{"families", a.families}, {"boundaries", a.bcs}, {"count", a.count},   {"nt", a.nt},
               {"nx", a.nx},             {"ny", a.ny},          {"t1", a.t1},         {"resolutions", a.resolutions}};
  ds.samples.resize(a.count);
  numkit::parallel_for(a.count, [&](std::size_t i) {
    numkit::Rng rng(numkit::derive_seed(g.seed, i));
    const auto f = fams[i % fams.size()];
    const auto bc = bcs[(i / fams.size()) % bcs.size()];
    const std::size_t r = res.empty() ? 0 : res[numkit::uniform_index(rng, res.size())];
    ds.samples[i] = generate_one(f, bc, a, r, rng);
  });
  bench::dataset_write(ds, a.out);
  std::cout << bench::dataset_header(ds).dump(2) << "\n";
  return 0;
}

// ---- augment ----

int run_augment(const Globals& g, const std::string& in, const std::string& out, double probability) {
  auto ds = bench::dataset_read(in);
  const json cfg = merged({{"probability", probability}}, section(load_config(g), "augment"));
  const double p = cfg.at("probability").get<double>();
  numkit::parallel_for(ds.samples.size(), [&](std::size_t i) {
    numkit::Rng rng(numkit::derive_seed(g.seed, i));
    ds.samples[i] = liesym::augment(ds.samples[i], liesym::default_config(ds.samples[i], p), rng);
  });
  ds.config = merged(ds.config, {{"augment", merged(cfg, {{"source", in}, {"seed", g.seed}})}});
  bench::dataset_write(ds, out);
  std::cout << "augmented " << ds.samples.size() << " samples with probability " << p << " -> " << out << "\n";
  return 0;
}

// ---- pretrain ----

int run_pretrain(const Globals& g, const std::vector<std::string>& data, const std::string& out_dir) {
  maecore::PretrainConfig base;
  base.seed = g.seed;
  base.deterministic = g.deterministic;
  const auto cfg =
      maecore::pretrain_config_from_json(merged(maecore::to_json(base), section(load_config(g), "pretrain")));
  const auto samples = read_datasets(data);
  fs::create_directories(out_dir);
  const auto result = maecore::pretrain(cfg, samples, [](const maecore::EpochLog& e) {
    std::cout << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr " << e.lr
              << std::endl;
  });
  maecore::save_checkpoint(result.best, (fs::path(out_dir) / "best.ck").string());
  maecore::save_checkpoint(result.last, (fs::path(out_dir) / "last.ck").string());
  json log = json::array();
  for (const auto& e : result.last.log)
    log.push_back({{"epoch", e.epoch}, {"train", e.train_loss}, {"val", e.val_loss}, {"lr", e.lr}});
  json report = header("pretrain", g, maecore::to_json(cfg));
  report["datasets"] = data;
  report["log"] = log;
  report["best_val"] = result.best.val_loss;
  write_report((fs::path(out_dir) / "report.json").string(), report);
  std::cout << "best validation loss " << result.best.val_loss << "\n";
  return 0;
}

// ---- probe / timestep / superres ----

struct TaskArgs {
  std::vector<std::string> data;
  std::string checkpoint;
  std::string cond = "none";
  bool plus_linear = false;
  std::size_t seeds = 3;
  double val_fraction = 0.2;
  std::string report;
};

void finish(const json& head, const std::vector<bench::MetricReport>& reports, const std::string& path) {
  json r = head;
  r["reports"] = json::array();
  for (const auto& m : reports) {
    r["reports"].push_back(m.to_json());
    std::cout << m.text() << "\n";
  }
  write_report(path, r);
}

tasks::TaskSpec probe_task(const std::string& name, const std::vector<pdegen::FieldSample>& samples) {
  if (name == "coefficients") return tasks::regression_task(samples.front().spec.family);
  if (name == "pde") return tasks::pde_task();
  if (name == "heat-bc") return tasks::heat_bc_task();
  if (name == "wave-bc") return tasks::wave_bc_task();
  if (name == "resolution") return tasks::resolution_task(samples.front().grid.two_d());
  return tasks::coefficient_task(split(name));
}

int run_probe(const Globals& g, const TaskArgs& a, const std::string& task_name, const std::string& variant) {
  tasks::ProbeConfig base;
  base.variant = tasks::probe_variant_from_name(variant);
  json defaults = {{"epochs", base.epochs}, {"batch_size", base.batch_size}, {"lr", base.lr},
                   {"weight_decay", base.weight_decay}, {"hidden", base.hidden}};
  const json cfg = merged(defaults, section(load_config(g), "probe"));
  base.epochs = cfg.at("epochs");
  base.batch_size = cfg.at("batch_size");
  base.lr = cfg.at("lr");
  base.weight_decay = cfg.at("weight_decay");
  base.hidden = cfg.at("hidden");

  const auto samples = read_datasets(a.data);
  const auto ck = maybe_checkpoint(a.checkpoint);
  const auto arch = ck ? ck->model_config() : maecore::mae_config_from_json(section(load_config(g), "model"));
  const auto task = probe_task(task_name, samples);
  auto [train_s, val_s] = split_samples(samples, a.val_fraction, g.seed);

  std::vector<double> metric, baseline;
  for (std::size_t s = 0; s < a.seeds; ++s) {
    auto pc = base;
    pc.seed = numkit::derive_seed(g.seed, s);
    numkit::Rng rng(numkit::derive_seed(pc.seed, 1));
    const auto train = tasks::make_examples(train_s, task, arch.window, rng);
    const auto val = tasks::make_examples(val_s, task, arch.window, rng);
    const auto r = tasks::train_probe(pc, task, ck ? &*ck : nullptr, arch, train, val);
    std::cout << "seed " << s << " metric " << r.metric << " baseline " << r.baseline << std::endl;
    metric.push_back(r.metric);
    baseline.push_back(r.baseline);
  }
  json head = header("probe", g, merged(cfg, {{"task", task.name}, {"variant", variant}}));
  head["checkpoint"] = a.checkpoint;
  finish(head,
         {bench::make_report(task.name, variant, metric), bench::make_report(task.name, "predict-baseline", baseline)},
         a.report);
  return 0;
}

int run_timestep(const Globals& g, const TaskArgs& a, const std::string& solver) {
  tasks::TimestepConfig base;
  base.solver = tasks::solver_from_name(solver);
  base.cond = {tasks::cond_from_name(a.cond), a.plus_linear};
  base.deterministic = g.deterministic;
  const auto cfg0 =
      tasks::timestep_config_from_json(merged(tasks::to_json(base), section(load_config(g), "timestep")));
  const auto samples = read_datasets(a.data);
  const auto ck = maybe_checkpoint(a.checkpoint);
  auto [train, val] = split_samples(samples, a.val_fraction, g.seed);

  std::vector<double> values;
  for (std::size_t s = 0; s < a.seeds; ++s) {
    auto cfg = cfg0;
    cfg.seed = numkit::derive_seed(g.seed, s);
    const auto r = tasks::train_timestep(cfg, train, val, ck ? &*ck : nullptr, [](std::size_t e, double l) {
      std::cout << "  epoch " << e << " loss " << l << std::endl;
    });
    std::cout << "seed " << s << " summed nRMSE " << r.mean_nrmse << std::endl;
    values.push_back(r.mean_nrmse);
  }
  std::string variant = solver + "-" + tasks::cond_name(cfg0.cond.source);
  if (cfg0.cond.plus_linear) variant += "+linear";
  json head = header("timestep", g, tasks::to_json(cfg0));
  head["checkpoint"] = a.checkpoint;
  finish(head, {bench::make_report("timestep-nrmse", variant, values)}, a.report);
  return 0;
}

int run_superres(const Globals& g, const TaskArgs& a) {
  tasks::SrTrainConfig base;
  base.cond = {tasks::cond_from_name(a.cond), a.plus_linear};
  base.deterministic = g.deterministic;
  const auto cfg0 = tasks::sr_config_from_json(merged(tasks::to_json(base), section(load_config(g), "superres")));
  const auto samples = read_datasets(a.data);
  const auto ck = maybe_checkpoint(a.checkpoint);
  auto [train, val] = split_samples(samples, a.val_fraction, g.seed);

  std::vector<double> sr, interp;
  for (std::size_t s = 0; s < a.seeds; ++s) {
    auto cfg = cfg0;
    cfg.seed = numkit::derive_seed(g.seed, s);
    const auto r = tasks::train_superres(cfg, train, val, ck ? &*ck : nullptr, [](std::size_t e, double l) {
      std::cout << "  epoch " << e << " loss " << l << std::endl;
    });
    // Displayed x10^-1, stored raw.
    std::cout << "seed " << s << " SR rmse (x1e-1) " << r.mean_sr * 10.0 << " interp " << r.mean_interp * 10.0
              << std::endl;
    sr.push_back(r.mean_sr);
    interp.push_back(r.mean_interp);
  }
  json head = header("superres", g, tasks::to_json(cfg0));
  head["checkpoint"] = a.checkpoint;
  finish(head,
         {bench::make_report("superres-rmse", std::string("sr-") + tasks::cond_name(cfg0.cond.source), sr),
          bench::make_report("superres-rmse", "interpolation", interp)},
         a.report);
  return 0;
}

// ---- latent ----

int run_latent(const Globals& g, const std::vector<std::string>& checkpoints, std::size_t n_triples,
               const std::string& report_path) {
  if (checkpoints.empty()) throw std::runtime_error("--checkpoint is required");
  const json cfg = merged({{"triples", n_triples}, {"groups", 8}, {"group_size", 4}, {"stride", 10}, {"pca_dim", 16},
                           {"nx", 64}},
                          section(load_config(g), "latent"));
  json head = header("latent", g, cfg);
  head["checkpoints"] = checkpoints;
  std::vector<bench::EmbeddingScores> scores;
  json arithmetic = json::array();
  for (const auto& path : checkpoints) {
    const auto ck = maecore::load_checkpoint(path);
    const auto model = maecore::model_from_checkpoint(ck);
    const auto mc = ck.model_config();
    auto grid = pdegen::default_grid(pdegen::Family::KdVBurgers);
    grid.nx = cfg.at("nx");

    numkit::Rng rng(numkit::derive_seed(g.seed, 0x6c6174));
    const auto sc = bench::build_scenarios(rng, grid, mc.window, cfg.at("triples"), cfg.at("groups"),
                                           cfg.at("group_size"), cfg.at("stride"));
    // Heat + inviscid Burgers in latent space against the viscous target.
    std::size_t closer = 0;
    for (const auto& t : sc.arithmetic) closer += bench::score_triple(model, ck.standardizer, t).closer_to_viscous();
    const double frac = sc.arithmetic.empty() ? 0.0 : static_cast<double>(closer) / sc.arithmetic.size();
    arithmetic.push_back({{"checkpoint", path}, {"triples", sc.arithmetic.size()}, {"closer_to_viscous", frac}});
    std::cout << path << ": latent sum closer to viscous Burgers in " << closer << "/" << sc.arithmetic.size()
              << " triples\n";
    scores.push_back(bench::embedding_comparison(fs::path(path).stem().string(),
                                                 bench::mae_embedder(model, ck.standardizer), sc, cfg.at("pca_dim")));
  }
  head["arithmetic"] = arithmetic;
  head["pca_fit"] = "per-model";
  finish(head, bench::to_reports(scores), report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-autoencoder pretraining and evaluation for PDE data"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--config", g.config_path, "JSON config; a section named after the subcommand takes precedence");
  app.add_flag("--deterministic", g.deterministic, "Bit-reproducible training (fixed reduction order)");
  app.footer("Worker threads: MAEPDE_WORKERS (default: hardware concurrency).");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Solve sampled PDEs and write a dataset container");
  c_gen->add_option("--family", gen.families, "Family or comma-separated families (cycled over samples)");
  c_gen->add_option("--bc", gen.bcs, "Boundary condition(s): periodic, dirichlet, neumann");
  c_gen->add_option("--count", gen.count, "Number of samples");
  c_gen->add_option("--nt", gen.nt, "Output time steps");
  c_gen->add_option("--nx", gen.nx, "Spatial points (x)");
  c_gen->add_option("--ny", gen.ny, "Spatial points (y, 2D only)");
  c_gen->add_option("--t1", gen.t1, "Final time");
  c_gen->add_option("--resolutions", gen.resolutions, "Comma-separated target resolutions drawn per sample");
  c_gen->add_option("--out", gen.out, "Output dataset path")->required();

  std::string aug_in, aug_out;
  double aug_p = 0.5;
  auto* c_aug = app.add_subcommand("augment", "Apply Lie point symmetry augmentation to a dataset");
  c_aug->add_option("--in", aug_in)->required();
  c_aug->add_option("--out", aug_out)->required();
  c_aug->add_option("--probability", aug_p, "Augmentation probability");

  std::vector<std::string> pre_data;
  std::string pre_out;
  auto* c_pre = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  c_pre->add_option("--data", pre_data, "Dataset path(s)")->required();
  c_pre->add_option("--out", pre_out, "Checkpoint directory")->required();

  auto add_task_opts = [](CLI::App* c, TaskArgs& a) {
    c->add_option("--data", a.data, "Dataset path(s)")->required();
    c->add_option("--checkpoint", a.checkpoint, "Pretrained checkpoint");
    c->add_option("--seeds", a.seeds, "Number of seeds");
    c->add_option("--val-fraction", a.val_fraction, "Held-out fraction");
    c->add_option("--report", a.report, "Report path (JSON)");
  };
  auto add_cond_opts = [](CLI::App* c, TaskArgs& a) {
    c->add_option("--cond", a.cond, "Conditioning: none, mae-frozen, mae-finetune, rand-enc, linear");
    c->add_flag("--plus-linear", a.plus_linear, "Add the ground-truth coefficient embedding");
  };

  TaskArgs probe_a, ts_a, sr_a;
  std::string probe_task_name = "alpha", probe_variant = "frozen", solver = "fno";
  auto* c_probe = app.add_subcommand("probe", "Feature probing (regression or classification)");
  add_task_opts(c_probe, probe_a);
  c_probe->add_option("--task", probe_task_name,
                      "Coefficient name(s), or coefficients, pde, heat-bc, wave-bc, resolution");
  c_probe->add_option("--variant", probe_variant, "frozen, finetune, baseline");

  auto* c_ts = app.add_subcommand("timestep", "Conditional autoregressive time-stepping");
  add_task_opts(c_ts, ts_a);
  add_cond_opts(c_ts, ts_a);
  c_ts->add_option("--solver", solver, "fno or unet");

  auto* c_sr = app.add_subcommand("superres", "Conditional super-resolution");
  add_task_opts(c_sr, sr_a);
  add_cond_opts(c_sr, sr_a);

  std::vector<std::string> lat_ck;
  std::size_t lat_n = 20;
  std::string lat_report;
  auto* c_lat = app.add_subcommand("latent", "Latent arithmetic and embedding-distance comparison");
  c_lat->add_option("--checkpoint", lat_ck, "Checkpoint(s) to compare")->required();
  c_lat->add_option("--triples", lat_n, "Number of Heat/Burgers triples");
  c_lat->add_option("--report", lat_report, "Report path (JSON)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*c_gen) return run_generate(g, gen);
    if (*c_aug) return run_augment(g, aug_in, aug_out, aug_p);
    if (*c_pre) return run_pretrain(g, pre_data, pre_out);
    if (*c_probe) return run_probe(g, probe_a, probe_task_name, probe_variant);
    if (*c_ts) return run_timestep(g, ts_a, solver);
    if (*c_sr) return run_superres(g, sr_a);
    if (*c_lat) return run_latent(g, lat_ck, lat_n, lat_report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

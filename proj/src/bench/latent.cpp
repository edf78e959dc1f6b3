#include "maepde/bench/latent.hpp"

#include "maepde/pdegen/solvers.hpp"

namespace maepde::bench {
namespace {

Tensor rows(const std::vector<std::vector<double>>& v) {
  if (v.empty()) throw MetricError("no embeddings");
  Tensor t({v.size(), v.front().size()});
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].size() != v.front().size()) throw MetricError("embeddings differ in dimension");
    std::copy(v[i].begin(), v[i].end(), t.data() + i * v.front().size());
  }
  return t;
}

double distance(const Tensor& x, std::size_t i, std::size_t j) {
  const std::size_t d = x.dim(1);
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += (x.at(i, k) - x.at(j, k)) * (x.at(i, k) - x.at(j, k));
  return std::sqrt(s);
}

Tensor select(const Tensor& x, std::size_t first, std::size_t count) {
  const std::size_t d = x.dim(1);
  Tensor out({count, d});
  std::copy(x.data() + first * d, x.data() + (first + count) * d, out.data());
  return out;
}

FieldSample solve_unforced(double alpha, double beta, const pdegen::ForcingParams& ic, const Grid& grid) {
  pdegen::PdeSpec s;
  s.family = pdegen::Family::KdVBurgers;
  s.coeffs = {{"alpha", alpha}, {"beta", beta}, {"gamma", 0.0}};
  s.ic = ic;
  return pdegen::solve(s, grid);
}

}  // namespace

Tensor latent_arithmetic(const MaeModel& model, const PatchSet& a, const PatchSet& b, double wa, double wb) {
  if (a.field_shape != b.field_shape || !(a.grid == b.grid)) throw MetricError("latent_arithmetic: shape mismatch");
  if (!a.masked_idx.empty() || !b.masked_idx.empty()) throw MetricError("latent_arithmetic expects unmasked inputs");
  numkit::NoGradGuard guard;
  const maecore::LatentState za = model.encode(a);
  const maecore::LatentState zb = model.encode(b);
  maecore::LatentState sum = za;
  sum.seq = numkit::add(numkit::scale(za.seq, wa), numkit::scale(zb.seq, wb));
  return model.decode(sum, a);
}

ArithmeticTriple make_triple(double nu, const pdegen::ForcingParams& ic, const Grid& grid) {
  if (!grid.periodic || grid.two_d()) throw MetricError("arithmetic triples need a periodic 1D grid");
  return {solve_unforced(0.0, nu, ic, grid), solve_unforced(1.0, 0.0, ic, grid), solve_unforced(1.0, nu, ic, grid)};
}

ArithmeticScore score_triple(const MaeModel& model, const maecore::Standardizer& stdz, const ArithmeticTriple& t) {
  const auto& cfg = model.config();
  const Tensor sum = latent_arithmetic(model, maecore::prepare_window(t.heat, cfg, stdz),
                                       maecore::prepare_window(t.burgers, cfg, stdz), 1.0, 1.0);
  auto err = [&](const FieldSample& s) {
    const Tensor z = stdz.apply(s.u);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += (sum[i] - z[i]) * (sum[i] - z[i]);
    return acc / static_cast<double>(z.size());
  };
  return {err(t.viscous), err(t.heat), err(t.burgers)};
}

ArithmeticTriple sample_triple(Rng& rng, const Grid& grid) {
  const pdegen::PdeSpec base = pdegen::sample_spec(pdegen::Family::KdVBurgers, rng);
  const double nu = numkit::uniform(rng, 0.1, 0.8);
  return make_triple(nu, base.ic, grid);
}

Embedder mae_embedder(const MaeModel& model, const maecore::Standardizer& stdz) {
  return [&model, stdz](const FieldSample& w) {
    numkit::NoGradGuard guard;
    const PatchSet ps = maecore::prepare_window(w, model.config(), stdz);
    const Tensor cls = model.encode(ps).cls().value();
    return std::vector<double>(cls.values().begin(), cls.values().end());
  };
}

EmbeddingScenarios build_scenarios(Rng& rng, const Grid& grid, std::size_t window, std::size_t n,
                                   std::size_t n_groups, std::size_t group_size, std::size_t stride) {
  if (window > grid.nt || stride == 0) throw MetricError("build_scenarios: bad window or stride");
  EmbeddingScenarios sc;
  const std::size_t last = grid.nt - window;
  for (std::size_t i = 0; i < n; ++i) {
    ArithmeticTriple t = sample_triple(rng, grid);
    sc.arithmetic.push_back({maecore::window_at(t.heat, last, window), maecore::window_at(t.burgers, last, window),
                             maecore::window_at(t.viscous, last, window)});
  }
  for (std::size_t g = 0; g < n_groups; ++g) {
    const double nu = numkit::uniform(rng, 0.1, 0.8);
    std::vector<FieldSample> group;
    for (std::size_t k = 0; k < group_size; ++k) {
      const auto ic = pdegen::sample_spec(pdegen::Family::KdVBurgers, rng).ic;
      group.push_back(maecore::window_at(solve_unforced(0.0, nu, ic, grid), 0, window));
    }
    sc.similarity.push_back(std::move(group));

    const auto ic = pdegen::sample_spec(pdegen::Family::KdVBurgers, rng).ic;
    const FieldSample traj = solve_unforced(0.0, numkit::uniform(rng, 0.1, 0.8), ic, grid);
    std::vector<FieldSample> seq;
    for (std::size_t s = 0; s <= last; s += stride) seq.push_back(maecore::window_at(traj, s, window));
    sc.temporal.push_back(std::move(seq));
  }
  return sc;
}

EmbeddingScores embedding_comparison(const std::string& name, const Embedder& embed, const EmbeddingScenarios& sc,
                                     std::size_t d) {
  // Row layout: triples (heat, burgers, viscous), similarity groups, temporal sequences.
  std::vector<std::vector<double>> raw;
  for (const auto& t : sc.arithmetic) {
    raw.push_back(embed(t.heat));
    raw.push_back(embed(t.burgers));
    raw.push_back(embed(t.viscous));
  }
  for (const auto& g : sc.similarity)
    for (const auto& w : g) raw.push_back(embed(w));
  for (const auto& s : sc.temporal)
    for (const auto& w : s) raw.push_back(embed(w));

  const Tensor x = rows(raw);
  const Pca pca = pca_fit(x, d);

  // Sums are formed before projection so the PCA centering applies once.
  const std::size_t nt = sc.arithmetic.size();
  Tensor sums({nt, x.dim(1)});
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t k = 0; k < x.dim(1); ++k) sums.at(i, k) = x.at(3 * i, k) + x.at(3 * i + 1, k);

  Tensor all({x.dim(0) + nt, x.dim(1)});
  std::copy(x.values().begin(), x.values().end(), all.data());
  std::copy(sums.values().begin(), sums.values().end(), all.data() + x.size());
  const Tensor p = max_normalize(pca.transform(all));

  EmbeddingScores out;
  out.model = name;
  out.pca_rank = pca.rank;
  out.rank_deficient = pca.rank_deficient;
  const std::size_t sum_row = x.dim(0);
  if (nt) {
    for (std::size_t i = 0; i < nt; ++i) out.arithmetic += distance(p, sum_row + i, 3 * i + 2);
    out.arithmetic /= static_cast<double>(nt);
  }
  std::size_t row = 3 * nt;
  if (!sc.similarity.empty()) {
    for (const auto& g : sc.similarity) {
      out.similarity += pairwise_mean_distance(select(p, row, g.size()));
      row += g.size();
    }
    out.similarity /= static_cast<double>(sc.similarity.size());
  }
  if (!sc.temporal.empty()) {
    for (const auto& s : sc.temporal) {
      if (s.size() < 2) throw MetricError("temporal sequence needs at least 2 windows");
      double acc = 0.0;
      for (std::size_t k = 0; k + 1 < s.size(); ++k) acc += distance(p, row + k, row + k + 1);
      out.temporal += acc / static_cast<double>(s.size() - 1);
      row += s.size();
    }
    out.temporal /= static_cast<double>(sc.temporal.size());
  }
  out.average = (out.arithmetic + out.similarity + out.temporal) / 3.0;
  return out;
}

std::vector<MetricReport> to_reports(const std::vector<EmbeddingScores>& scores) {
  std::vector<MetricReport> out;
  for (const auto& s : scores) {
    out.push_back(make_report("latent_arithmetic", s.model, {s.arithmetic}));
    out.push_back(make_report("latent_similarity", s.model, {s.similarity}));
    out.push_back(make_report("latent_temporal", s.model, {s.temporal}));
    out.push_back(make_report("latent_average", s.model, {s.average}));
  }
  return out;
}

}  // namespace maepde::bench

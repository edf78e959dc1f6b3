#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maepde/bench/metrics.hpp"
#include "maepde/maecore/pretrain.hpp"

namespace maepde::bench {

using maecore::MaeModel;
using maecore::PatchSet;
using pdegen::FieldSample;
using pdegen::Grid;
using numkit::Rng;

/// Encodes both unmasked PatchSets, forms wa * z_a + wb * z_b over the full
/// token sequence (CLS included) and decodes it to a field.
Tensor latent_arithmetic(const MaeModel& model, const PatchSet& a, const PatchSet& b, double wa, double wb);

/// Heat (u_t = nu u_xx), inviscid Burgers (u_t + u u_x = 0) and viscous
/// Burgers (their sum) from one initial condition.
struct ArithmeticTriple {
  FieldSample heat, burgers, viscous;
};

ArithmeticTriple make_triple(double nu, const pdegen::ForcingParams& ic, const Grid& grid);
/// nu ~ U(0.1, 0.8), initial condition drawn like the KdV-Burgers family's.
ArithmeticTriple sample_triple(Rng& rng, const Grid& grid);

/// Decoded Heat + Burgers latent sum compared (MSE, standardized units)
/// with each member of a triple whose windows are cfg.window steps long.
struct ArithmeticScore {
  double to_viscous = 0.0, to_heat = 0.0, to_burgers = 0.0;
  bool closer_to_viscous() const { return to_viscous < to_heat && to_viscous < to_burgers; }
};

ArithmeticScore score_triple(const MaeModel& model, const maecore::Standardizer& stdz, const ArithmeticTriple& t);

/// Maps a window to a latent vector.
using Embedder = std::function<std::vector<double>(const FieldSample&)>;

/// CLS embedding of the unmasked, standardized window.
Embedder mae_embedder(const MaeModel& model, const maecore::Standardizer& stdz);

struct EmbeddingScenarios {
  /// Windows of matched triples.
  std::vector<ArithmeticTriple> arithmetic;
  /// Windows sharing coefficients but not initial conditions, one group per coefficient set.
  std::vector<std::vector<FieldSample>> similarity;
  /// Successive windows of one trajectory, one sequence per trajectory.
  std::vector<std::vector<FieldSample>> temporal;
};

/// Heat-equation scenarios: `n` triples windowed at the end of the
/// trajectory, `n_groups` groups of `group_size` same-nu samples, and
/// `n_groups` trajectories cut into windows `stride` steps apart.
EmbeddingScenarios build_scenarios(Rng& rng, const Grid& grid, std::size_t window, std::size_t n,
                                   std::size_t n_groups, std::size_t group_size, std::size_t stride);

struct EmbeddingScores {
  std::string model;
  double arithmetic = 0.0, similarity = 0.0, temporal = 0.0, average = 0.0;
  std::size_t pca_rank = 0;
  bool rank_deficient = false;
};

/// Embeds every scenario window, fits a PCA to d dimensions on this model's
/// embeddings, max-normalizes, and averages the three distances.
EmbeddingScores embedding_comparison(const std::string& name, const Embedder& embed, const EmbeddingScenarios& sc,
                                     std::size_t d = 16);

std::vector<MetricReport> to_reports(const std::vector<EmbeddingScores>& scores);

}  // namespace maepde::bench

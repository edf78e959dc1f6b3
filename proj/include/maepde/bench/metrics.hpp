#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "maepde/numkit/tensor.hpp"

namespace maepde::bench {

using numkit::Tensor;

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// sum_t ||pred_t - true_t||_2 / ||true_t||_2 over the leading (time) axis.
double nrmse(const Tensor& pred, const Tensor& truth);

/// sum_t sqrt(mean_x (pred_t - true_t)^2).
double rmse_summed(const Tensor& pred, const Tensor& truth);

struct Pca {
  std::vector<double> mean;             // (D)
  Tensor components;                    // (k, D), orthonormal rows
  std::vector<double> explained_variance;
  std::size_t rank = 0;
  bool rank_deficient = false;          // rank < requested d

  /// (n, D) -> (n, k)
  Tensor transform(const Tensor& x) const;
};

/// Principal axes of the rows of `x` (n, D). When the data rank is below d
/// only the available rank is kept and `rank_deficient` is set.
Pca pca_fit(const Tensor& x, std::size_t d);
Tensor pca_project(const Tensor& x, std::size_t d);

/// Divides every row by the largest row norm in the set.
Tensor max_normalize(const Tensor& x);

/// Mean L2 distance over unordered row pairs of `a`.
double pairwise_mean_distance(const Tensor& a);
/// Mean L2 distance over the product a x b.
double pairwise_mean_distance(const Tensor& a, const Tensor& b);

struct MetricReport {
  std::string task;
  std::string variant;
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation

  nlohmann::json to_json() const;
  std::string text() const;
};

/// Aggregates per-seed values; fewer than `min_seeds` values is an error.
MetricReport make_report(std::string task, std::string variant, std::vector<double> values,
                         std::size_t min_seeds = 1);

}  // namespace maepde::bench

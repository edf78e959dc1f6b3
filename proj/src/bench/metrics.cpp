#include "maepde/bench/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace maepde::bench {
namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw MetricError(std::string(op) + ": shapes " + numkit::shape_str(a.shape()) + " and " +
                      numkit::shape_str(b.shape()) + " differ");
  }
  if (a.rank() < 2 || a.dim(0) == 0) throw MetricError(std::string(op) + ": expected a (time, space...) trajectory");
}

void check_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) throw MetricError(std::string(op) + ": expected a (n, dim) matrix, got " + numkit::shape_str(x.shape()));
}

double row_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const std::size_t d = a.dim(1);
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = a.at(i, k) - b.at(j, k);
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

double nrmse(const Tensor& pred, const Tensor& truth) {
  same_shape(pred, truth, "nrmse");
  const std::size_t nt = truth.dim(0);
  const std::size_t per = truth.size() / nt;
  double total = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = t * per; i < (t + 1) * per; ++i) {
      const double d = pred[i] - truth[i];
      num += d * d;
      den += truth[i] * truth[i];
    }
    if (den == 0.0) throw MetricError("nrmse: true snapshot " + std::to_string(t) + " has zero norm");
    total += std::sqrt(num) / std::sqrt(den);
  }
  return total;
}

double rmse_summed(const Tensor& pred, const Tensor& truth) {
  same_shape(pred, truth, "rmse_summed");
  const std::size_t nt = truth.dim(0);
  const std::size_t per = truth.size() / nt;
  double total = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    double s = 0.0;
    for (std::size_t i = t * per; i < (t + 1) * per; ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    total += std::sqrt(s / static_cast<double>(per));
  }
  return total;
}

Tensor Pca::transform(const Tensor& x) const {
  check_matrix(x, "pca transform");
  const std::size_t n = x.dim(0), d = x.dim(1), k = components.rank() == 2 ? components.dim(0) : 0;
  if (d != mean.size()) throw MetricError("pca transform: dimension mismatch");
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (x.at(i, j) - mean[j]) * components.at(c, j);
      out.at(i, c) = s;
    }
  return out;
}

Pca pca_fit(const Tensor& x, std::size_t d) {
  check_matrix(x, "pca_fit");
  const std::size_t n = x.dim(0), dim = x.dim(1);
  if (n < 2) throw MetricError("pca_fit needs at least 2 vectors");
  if (d == 0) throw MetricError("pca_fit: d must be positive");
  Eigen::MatrixXd m(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = x.at(i, j);
  const Eigen::RowVectorXd mu = m.colwise().mean();
  m.rowwise() -= mu;
  const Eigen::MatrixXd cov = (m.transpose() * m) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw MetricError("pca_fit: eigendecomposition failed");

  const Eigen::VectorXd& evals = es.eigenvalues();  // ascending
  const double top = std::max(evals(evals.size() - 1), 0.0);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < evals.size(); ++i) rank += evals(i) > 1e-12 * top && evals(i) > 0.0;

  Pca p;
  p.mean.assign(mu.data(), mu.data() + dim);
  p.rank = rank;
  const std::size_t k = std::min(d, rank);
  p.rank_deficient = rank < d;
  p.components = Tensor({k, dim});
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(dim - 1 - c);
    Eigen::VectorXd v = es.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    for (std::size_t j = 0; j < dim; ++j) p.components.at(c, j) = v(static_cast<Eigen::Index>(j));
    p.explained_variance.push_back(evals(col));
  }
  return p;
}

Tensor pca_project(const Tensor& x, std::size_t d) { return pca_fit(x, d).transform(x); }

Tensor max_normalize(const Tensor& x) {
  check_matrix(x, "max_normalize");
  double top = 0.0;
  const std::size_t d = x.dim(1);
  for (std::size_t i = 0; i < x.dim(0); ++i) top = std::max(top, numkit::l2_norm(x.values().subspan(i * d, d)));
  if (top == 0.0) return x;
  Tensor out = x;
  for (double& v : out.values()) v /= top;
  return out;
}

double pairwise_mean_distance(const Tensor& a) {
  check_matrix(a, "pairwise_mean_distance");
  const std::size_t n = a.dim(0);
  if (n < 2) throw MetricError("pairwise_mean_distance needs at least 2 vectors, got " + std::to_string(n));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) total += row_distance(a, i, a, j);
  return total / static_cast<double>(n * (n - 1) / 2);
}

double pairwise_mean_distance(const Tensor& a, const Tensor& b) {
  check_matrix(a, "pairwise_mean_distance");
  check_matrix(b, "pairwise_mean_distance");
  if (a.dim(0) == 0 || b.dim(0) == 0) throw MetricError("pairwise_mean_distance: empty set");
  if (a.dim(1) != b.dim(1)) throw MetricError("pairwise_mean_distance: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(0); ++j) total += row_distance(a, i, b, j);
  return total / static_cast<double>(a.dim(0) * b.dim(0));
}

nlohmann::json MetricReport::to_json() const {
  return {{"task", task}, {"variant", variant}, {"values", values}, {"mean", mean}, {"std", std}};
}

std::string MetricReport::text() const {
  std::ostringstream os;
  os.precision(6);
  os << task << " " << variant << " mean " << mean << " std " << std << " n " << values.size() << " [";
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? " " : "") << values[i];
  os << "]";
  return os.str();
}

MetricReport make_report(std::string task, std::string variant, std::vector<double> values, std::size_t min_seeds) {
  if (values.size() < std::max<std::size_t>(min_seeds, 1)) {
    throw MetricError(task + "/" + variant + ": " + std::to_string(values.size()) + " values, need at least " +
                      std::to_string(min_seeds));
  }
  MetricReport r{std::move(task), std::move(variant), std::move(values), 0.0, 0.0};
  const double n = static_cast<double>(r.values.size());
  for (double v : r.values) r.mean += v;
  r.mean /= n;
  if (r.values.size() > 1) {
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

}  // namespace maepde::bench

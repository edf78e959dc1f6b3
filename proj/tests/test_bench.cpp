#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "maepde/bench/container.hpp"
#include "maepde/bench/latent.hpp"
#include "maepde/bench/metrics.hpp"

using namespace maepde;
using bench::DatasetError;
using numkit::Rng;
using numkit::Tensor;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("maepde_bench_" + name)).string();
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bench::Dataset small_kdv(std::size_t n) {
  bench::Dataset ds;
  ds.master_seed = 11;
  ds.config = {{"family", "KdVBurgers"}, {"count", n}};
  auto g = pdegen::default_grid(pdegen::Family::KdVBurgers);
  g.nt = 30;
  g.t1 = 0.25;
  g.nx = 32;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(numkit::derive_seed(11, i));
    auto s = pdegen::solve(pdegen::sample_spec(pdegen::Family::KdVBurgers, rng), g);
    bench::quantize_f32(s);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Tensor t({n, d});
  for (double& v : t.values()) v = numkit::normal(rng, 0.0, 1.0);
  return t;
}

// Cyclic Jacobi eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

double brute_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t k = 0; k < a.dim(1); ++k) {
    aa += a.at(i, k) * a.at(i, k);
    bb += b.at(j, k) * b.at(j, k);
    ab += a.at(i, k) * b.at(j, k);
  }
  return std::sqrt(std::max(aa + bb - 2.0 * ab, 0.0));
}

maecore::MaeModel tiny_mae() {
  maecore::MaeConfig c;
  c.enc_dim = 16, c.enc_depth = 1, c.enc_heads = 2;
  c.dec_dim = 8, c.dec_depth = 1, c.dec_heads = 2;
  c.patch = {4, 4, 0};
  c.window = 8;
  c.init_seed = 3;
  return maecore::MaeModel(c);
}

}  // namespace

TEST(Container, RoundtripBitExact) {
  const auto ds = small_kdv(10);
  const auto p = tmp_path("rt.pdeds");
  bench::dataset_write(ds, p);
  const auto back = bench::dataset_read(p);
  ASSERT_EQ(back.samples.size(), 10u);
  EXPECT_EQ(back.master_seed, 11u);
  EXPECT_EQ(back.config, ds.config);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    EXPECT_EQ(std::memcmp(a.u.data(), b.u.data(), a.u.size() * sizeof(double)), 0);
    EXPECT_EQ(a.u.shape(), b.u.shape());
    EXPECT_TRUE(a.grid == b.grid);
    EXPECT_EQ(bench::to_json(a.spec), bench::to_json(b.spec));
    EXPECT_EQ(a.spec.coeffs, b.spec.coeffs);
    EXPECT_EQ(a.spec.seed, b.spec.seed);
  }
  const auto h = bench::dataset_read_header(p);
  EXPECT_EQ(h.at("count").get<std::size_t>(), 10u);
  EXPECT_EQ(h.at("family").get<std::string>(), "kdv_burgers");
  EXPECT_TRUE(h.at("coefficient_ranges").contains("alpha"));
  EXPECT_GT(h.at("standardization").at("std").get<double>(), 0.0);
  std::filesystem::remove(p);
}

TEST(Container, BadMagic) {
  const auto p = tmp_path("magic.pdeds");
  bench::dataset_write(small_kdv(1), p);
  auto bytes = slurp(p);
  bytes[0] = 'X';
  dump(p, bytes);
  try {
    bench::dataset_read(p);
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetError::Kind::BadMagic);
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
  std::filesystem::remove(p);
}

TEST(Container, VersionMismatch) {
  const auto p = tmp_path("ver.pdeds");
  bench::dataset_write(small_kdv(1), p);
  auto bytes = slurp(p);
  bytes[5] = 7;
  dump(p, bytes);
  try {
    bench::dataset_read(p);
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetError::Kind::VersionMismatch);
  }
  std::filesystem::remove(p);
}

TEST(Container, HeaderCountBeyondRecordsIsTruncated) {
  const auto ds5 = small_kdv(5);
  auto ds4 = ds5;
  ds4.samples.pop_back();
  const auto p5 = tmp_path("t5.pdeds"), p4 = tmp_path("t4.pdeds");
  bench::dataset_write(ds5, p5);
  bench::dataset_write(ds4, p4);
  const auto b5 = slurp(p5), b4 = slurp(p4);
  auto header_end = [](const std::string& b) {
    std::uint32_t len;
    std::memcpy(&len, b.data() + 9, 4);
    return 13 + static_cast<std::size_t>(len);
  };
  dump(p5, b5.substr(0, header_end(b5)) + b4.substr(header_end(b4)));
  try {
    bench::dataset_read(p5);
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetError::Kind::Truncated);
    EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
  }
  std::filesystem::remove(p5);
  std::filesystem::remove(p4);
}

TEST(Container, ShapeMustMatchGrid) {
  auto ds = small_kdv(1);
  ds.samples[0].u = Tensor({3, 3});
  EXPECT_THROW(bench::dataset_write(ds, tmp_path("bad.pdeds")), DatasetError);
}

TEST(Nrmse, Examples) {
  Rng rng(1);
  const Tensor y = random_matrix(7, 12, rng);
  EXPECT_EQ(bench::nrmse(y, y), 0.0);
  EXPECT_NEAR(bench::nrmse(Tensor(y.shape()), y), 7.0, 1e-12);

  const Tensor p = random_matrix(7, 12, rng);
  double brute = 0.0;
  for (std::size_t t = 0; t < 7; ++t) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
      num += std::pow(p.at(t, i) - y.at(t, i), 2);
      den += std::pow(y.at(t, i), 2);
    }
    brute += std::sqrt(num / den);
  }
  EXPECT_NEAR(bench::nrmse(p, y), brute, 1e-12);
}

TEST(Nrmse, ZeroTruthStepIsError) {
  Tensor y({2, 3}, 1.0);
  for (std::size_t i = 0; i < 3; ++i) y.at(1, i) = 0.0;
  EXPECT_THROW(bench::nrmse(y, y), bench::MetricError);
  EXPECT_THROW(bench::nrmse(Tensor({2, 3}), Tensor({3, 2})), bench::MetricError);
}

TEST(Nrmse, RmseSummedBrute) {
  Rng rng(2);
  const Tensor y = random_matrix(4, 9, rng), p = random_matrix(4, 9, rng);
  double brute = 0.0;
  for (std::size_t t = 0; t < 4; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < 9; ++i) s += std::pow(p.at(t, i) - y.at(t, i), 2);
    brute += std::sqrt(s / 9.0);
  }
  EXPECT_NEAR(bench::rmse_summed(p, y), brute, 1e-12);
}

TEST(Pca, FullRankPreservesDistances) {
  Rng rng(3);
  const Tensor x = random_matrix(20, 6, rng);
  const Tensor p = bench::pca_project(x, 6);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = i + 1; j < 20; ++j) EXPECT_NEAR(brute_distance(p, i, p, j), brute_distance(x, i, x, j), 1e-10);
}

TEST(Pca, EigenstructureMatchesJacobi) {
  Rng rng(4);
  Tensor x = random_matrix(40, 8, rng);
  for (std::size_t i = 0; i < 40; ++i) x.at(i, 2) = 3.0 * x.at(i, 2) + x.at(i, 0);
  const auto pca = bench::pca_fit(x, 5);

  std::vector<double> mu(8, 0.0);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 8; ++j) mu[j] += x.at(i, j) / 40.0;
  std::vector<std::vector<double>> cov(8, std::vector<double>(8, 0.0));
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t b = 0; b < 8; ++b) cov[a][b] += (x.at(i, a) - mu[a]) * (x.at(i, b) - mu[b]) / 39.0;
  const auto ev = jacobi_eigenvalues(cov);

  ASSERT_EQ(pca.explained_variance.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(pca.explained_variance[k], ev[k], 1e-8);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_LE(pca.explained_variance[k], pca.explained_variance[k - 1]);
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 8; ++j) dot += pca.components.at(a, j) * pca.components.at(b, j);
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-10);
    }
  EXPECT_FALSE(pca.rank_deficient);
}

TEST(Pca, RankDeficientProjectsOntoAvailableRank) {
  Rng rng(5);
  const Tensor basis = random_matrix(2, 6, rng);
  Tensor x({12, 6});
  for (std::size_t i = 0; i < 12; ++i) {
    const double a = numkit::normal(rng, 0.0, 1.0), b = numkit::normal(rng, 0.0, 1.0);
    for (std::size_t j = 0; j < 6; ++j) x.at(i, j) = a * basis.at(0, j) + b * basis.at(1, j);
  }
  const auto pca = bench::pca_fit(x, 4);
  EXPECT_EQ(pca.rank, 2u);
  EXPECT_TRUE(pca.rank_deficient);
  EXPECT_EQ(pca.transform(x).shape(), (numkit::Shape{12, 2}));
}

TEST(MaxNormalize, LargestNormIsOne) {
  Rng rng(6);
  const Tensor n = bench::max_normalize(random_matrix(9, 4, rng));
  double top = 0.0;
  for (std::size_t i = 0; i < 9; ++i) top = std::max(top, numkit::l2_norm(n.values().subspan(i * 4, 4)));
  EXPECT_NEAR(top, 1.0, 1e-15);
}

TEST(Pairwise, Examples) {
  EXPECT_EQ(bench::pairwise_mean_distance(Tensor({2, 3}, 1.5)), 0.0);
  EXPECT_DOUBLE_EQ(bench::pairwise_mean_distance(Tensor({2, 2}, {0.0, 0.0, 3.0, 4.0})), 5.0);
  EXPECT_THROW(bench::pairwise_mean_distance(Tensor({1, 2})), bench::MetricError);
  EXPECT_THROW(bench::pairwise_mean_distance(Tensor({0, 2}), Tensor({1, 2})), bench::MetricError);
}

TEST(Pairwise, BruteForce) {
  Rng rng(7);
  const Tensor a = random_matrix(10, 5, rng), b = random_matrix(4, 5, rng);
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < i; ++j, ++n) s += brute_distance(a, i, a, j);
  EXPECT_NEAR(bench::pairwise_mean_distance(a), s / n, 1e-12);
  double s2 = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 4; ++j) s2 += brute_distance(a, i, b, j);
  EXPECT_NEAR(bench::pairwise_mean_distance(a, b), s2 / 40.0, 1e-12);
}

TEST(MetricReport, Aggregation) {
  const auto r = bench::make_report("timestep", "FNO", {1.0, 2.0, 3.0, 4.0}, 3);
  EXPECT_EQ(r.mean, 2.5);
  EXPECT_EQ(r.std, std::sqrt(5.0 / 3.0));
  EXPECT_THROW(bench::make_report("t", "v", {1.0, 2.0}, 3), bench::MetricError);
  EXPECT_NE(r.text().find("FNO"), std::string::npos);
  EXPECT_EQ(r.to_json().at("values").size(), 4u);
}

TEST(LatentArithmetic, IdentityAndSymmetry) {
  const auto model = tiny_mae();
  auto g = pdegen::default_grid(pdegen::Family::KdVBurgers);
  g.nt = 40, g.nx = 16, g.t1 = 0.3;
  Rng rng(8);
  const auto t = bench::sample_triple(rng, g);
  const maecore::Standardizer st;
  const auto pa = maecore::prepare_window(maecore::window_at(t.heat, 0, 8), model.config(), st);
  const auto pb = maecore::prepare_window(maecore::window_at(t.burgers, 0, 8), model.config(), st);

  numkit::NoGradGuard guard;
  const Tensor plain = model.decode(model.encode(pa), pa);
  EXPECT_EQ(bench::latent_arithmetic(model, pa, pb, 1.0, 0.0), plain);
  EXPECT_EQ(bench::latent_arithmetic(model, pa, pb, 0.3, 0.9), bench::latent_arithmetic(model, pb, pa, 0.9, 0.3));

  auto other = pdegen::default_grid(pdegen::Family::KdVBurgers);
  other.nt = 40, other.nx = 32, other.t1 = 0.3;
  const auto t2 = bench::sample_triple(rng, other);
  const auto pc = maecore::prepare_window(maecore::window_at(t2.heat, 0, 8), model.config(), st);
  EXPECT_THROW(bench::latent_arithmetic(model, pa, pc, 1.0, 1.0), bench::MetricError);
}

TEST(LatentArithmetic, TripleSharesInitialCondition) {
  auto g = pdegen::default_grid(pdegen::Family::KdVBurgers);
  g.nt = 30, g.nx = 64, g.t1 = 1.0;
  Rng rng(9);
  const auto t = bench::sample_triple(rng, g);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(t.heat.u.at(0, i), t.burgers.u.at(0, i));
    EXPECT_EQ(t.heat.u.at(0, i), t.viscous.u.at(0, i));
  }
  EXPECT_GT(numkit::max_abs_diff(t.viscous.u, t.heat.u), 1e-3);
  EXPECT_GT(numkit::max_abs_diff(t.viscous.u, t.burgers.u), 1e-3);
}

namespace {

// A fixed random linear feature map of the window, optionally rotated.
bench::Embedder linear_embedder(std::size_t in, const Tensor* rotation) {
  Rng rng(10);
  auto w = std::make_shared<Tensor>(random_matrix(6, in, rng));
  return [w, rotation](const pdegen::FieldSample& s) {
    std::vector<double> z(6, 0.0);
    for (std::size_t k = 0; k < 6; ++k)
      for (std::size_t i = 0; i < s.u.size(); ++i) z[k] += w->at(k, i) * s.u[i];
    if (!rotation) return z;
    std::vector<double> r(6, 0.0);
    for (std::size_t a = 0; a < 6; ++a)
      for (std::size_t b = 0; b < 6; ++b) r[a] += rotation->at(a, b) * z[b];
    return r;
  };
}

Tensor random_rotation(std::size_t n, Rng& rng) {
  // Gram-Schmidt on a random matrix.
  Tensor q = random_matrix(n, n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < n; ++k) dot += q.at(i, k) * q.at(j, k);
      for (std::size_t k = 0; k < n; ++k) q.at(i, k) -= dot * q.at(j, k);
    }
    const double nrm = numkit::l2_norm(q.values().subspan(i * n, n));
    for (std::size_t k = 0; k < n; ++k) q.at(i, k) /= nrm;
  }
  return q;
}

}  // namespace

TEST(EmbeddingComparison, RotationInvariant) {
  auto g = pdegen::default_grid(pdegen::Family::KdVBurgers);
  g.nt = 24, g.nx = 16, g.t1 = 0.4;
  Rng rng(11);
  const auto sc = bench::build_scenarios(rng, g, 8, 3, 2, 3, 4);
  Rng rrng(12);
  const Tensor rot = random_rotation(6, rrng);
  const auto a = bench::embedding_comparison("plain", linear_embedder(8 * 16, nullptr), sc, 4);
  const auto b = bench::embedding_comparison("rotated", linear_embedder(8 * 16, &rot), sc, 4);
  EXPECT_NEAR(a.arithmetic, b.arithmetic, 1e-8);
  EXPECT_NEAR(a.similarity, b.similarity, 1e-8);
  EXPECT_NEAR(a.temporal, b.temporal, 1e-8);
  EXPECT_GT(a.average, 0.0);
  EXPECT_EQ(bench::to_reports({a, b}).size(), 8u);
}

TEST(EmbeddingComparison, ConstantFieldHasZeroTemporalDistance) {
  auto g = pdegen::default_grid(pdegen::Family::KdVBurgers);
  g.nt = 24, g.nx = 16, g.t1 = 0.4;
  Rng rng(13);
  auto sc = bench::build_scenarios(rng, g, 8, 3, 2, 3, 4);
  pdegen::FieldSample flat = sc.temporal[0][0];
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 16; ++i) flat.u.at(t, i) = std::sin(0.4 * static_cast<double>(i));
  sc.temporal = {{flat, flat, flat}};
  const auto s = bench::embedding_comparison("m", linear_embedder(8 * 16, nullptr), sc, 4);
  EXPECT_EQ(s.temporal, 0.0);

  sc.similarity = {{flat}};
  EXPECT_THROW(bench::embedding_comparison("m", linear_embedder(8 * 16, nullptr), sc, 4), bench::MetricError);
}

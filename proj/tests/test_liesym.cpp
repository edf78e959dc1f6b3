#include <gtest/gtest.h>

#include <cmath>

#include "maepde/liesym/augment.hpp"
#include "maepde/pdegen/solvers.hpp"

using namespace maepde::liesym;
using maepde::numkit::Rng;
using maepde::numkit::Tensor;
using maepde::pdegen::Boundary;
using maepde::pdegen::Family;
using maepde::pdegen::PdeSpec;

namespace {

FieldSample kdv_sample(std::uint64_t seed, double alpha, bool forced) {
  Rng rng(seed);
  PdeSpec s = maepde::pdegen::sample_spec(Family::KdVBurgers, rng);
  s.coeffs["alpha"] = alpha;
  if (!forced) s.forcing.reset();
  auto g = maepde::pdegen::default_grid(Family::KdVBurgers);
  g.nt = 60;
  g.t1 = g.t0 + 59 * g.dt();
  return maepde::pdegen::solve(s, g);
}

FieldSample ns_sample(std::uint64_t seed) {
  Rng rng(seed);
  PdeSpec s = maepde::pdegen::sample_spec(Family::Heat2D, rng);
  auto g = maepde::pdegen::default_grid(Family::Heat2D);
  g.nt = 6;
  g.t1 = g.t0 + 5 * g.dt();
  return maepde::pdegen::solve(s, g);
}

// Mean |u_t + a u u_x - b u_xx + c u_xxx| over interior times, by central
// differences with periodic wrap in x.
double kdv_residual(const FieldSample& s) {
  const auto& g = s.grid;
  const double a = s.spec.coeff("alpha"), b = s.spec.coeff("beta"), c = s.spec.coeff("gamma");
  const double dt = g.dt(), dx = g.dx();
  const std::size_t nx = g.nx;
  auto u = [&](std::size_t n, long i) { return s.u.at(n, static_cast<std::size_t>((i % long(nx) + long(nx)) % long(nx))); };
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 1; n + 1 < g.nt; ++n)
    for (long i = 0; i < long(nx); ++i) {
      const double ut = (u(n + 1, i) - u(n - 1, i)) / (2 * dt);
      const double ux = (u(n, i + 1) - u(n, i - 1)) / (2 * dx);
      const double uxx = (u(n, i + 1) - 2 * u(n, i) + u(n, i - 1)) / (dx * dx);
      const double uxxx = (u(n, i + 2) - 2 * u(n, i + 1) + 2 * u(n, i - 1) - u(n, i - 2)) / (2 * dx * dx * dx);
      total += std::abs(ut + a * u(n, i) * ux - b * uxx + c * uxxx);
      ++count;
    }
  return total / static_cast<double>(count);
}

double max_diff(const Tensor& a, const Tensor& b) { return maepde::numkit::max_abs_diff(a, b); }

}  // namespace

TEST(FourierShift, ZeroAndFullPeriodAreIdentity) {
  const FieldSample s = kdv_sample(1, 1.0, true);
  EXPECT_LT(max_diff(fourier_shift(s, 0.0).u, s.u), 1e-14);
  EXPECT_LT(max_diff(fourier_shift(s, s.grid.lx()).u, s.u), 1e-12);
  const FieldSample q = ns_sample(2);
  EXPECT_LT(max_diff(fourier_shift(q, q.grid.ly(), Axis::Y).u, q.u), 1e-12);
}

TEST(FourierShift, GroupLaw) {
  const FieldSample s = kdv_sample(3, 1.0, true);
  const double a = 0.37, b = -1.21;
  EXPECT_LT(max_diff(fourier_shift(fourier_shift(s, a), b).u, fourier_shift(s, a + b).u), 1e-12);
  EXPECT_LT(max_diff(fourier_shift(fourier_shift(s, a), -a).u, s.u), 1e-12);
  const FieldSample q = ns_sample(4);
  EXPECT_LT(max_diff(fourier_shift(fourier_shift(q, a, Axis::Y), b, Axis::Y).u, fourier_shift(q, a + b, Axis::Y).u),
            1e-12);
}

TEST(FourierShift, GridMultipleIsExactRoll) {
  const FieldSample s = kdv_sample(5, 1.0, true);
  const FieldSample r = fourier_shift(s, 3 * s.grid.dx());
  for (std::size_t n = 0; n < s.grid.nt; n += 7)
    for (std::size_t i = 0; i < s.grid.nx; ++i)
      EXPECT_NEAR(r.u.at(n, i), s.u.at(n, (i + s.grid.nx - 3) % s.grid.nx), 1e-12);
}

TEST(FourierShift, PreservesMeanAndNorm) {
  const FieldSample s = kdv_sample(6, 1.0, true);
  const FieldSample r = fourier_shift(s, 0.123);
  for (std::size_t n = 0; n < s.grid.nt; n += 5) {
    double m0 = 0, m1 = 0, e0 = 0, e1 = 0;
    for (std::size_t i = 0; i < s.grid.nx; ++i) {
      m0 += s.u.at(n, i), m1 += r.u.at(n, i);
      e0 += s.u.at(n, i) * s.u.at(n, i), e1 += r.u.at(n, i) * r.u.at(n, i);
    }
    EXPECT_NEAR(m0, m1, 1e-12);
    EXPECT_NEAR(e0, e1, 1e-11 * e0);
  }
}

TEST(FourierShift, RejectsBoundedSamples) {
  Rng rng(7);
  PdeSpec s = maepde::pdegen::sample_spec(Family::Heat1D, rng, Boundary::Dirichlet);
  auto g = maepde::pdegen::default_grid(Family::Heat1D, Boundary::Dirichlet);
  g.nt = 3;
  const FieldSample f = maepde::pdegen::solve(s, g);
  EXPECT_THROW(fourier_shift(f, 0.1), AugmentError);
  EXPECT_THROW(galilean_boost(f, 0.1), AugmentError);
  EXPECT_THROW(fourier_shift(kdv_sample(1, 1, true), 0.1, Axis::Y), AugmentError);
}

TEST(TimeShift, Windows) {
  const FieldSample s = kdv_sample(8, 1.0, true);
  const FieldSample w0 = time_shift(s, 20, 0.0);
  EXPECT_EQ(w0.grid.nt, 20u);
  for (std::size_t n = 0; n < 20; ++n)
    for (std::size_t i = 0; i < s.grid.nx; ++i) EXPECT_EQ(w0.u.at(n, i), s.u.at(n, i));
  const FieldSample w7 = time_shift(s, 20, 7 * s.grid.dt());
  for (std::size_t n = 0; n < 20; ++n)
    for (std::size_t i = 0; i < s.grid.nx; ++i) EXPECT_EQ(w7.u.at(n, i), s.u.at(n + 7, i));
  EXPECT_DOUBLE_EQ(w7.grid.t(0), s.grid.t(7));
  EXPECT_DOUBLE_EQ(w7.grid.dt(), s.grid.dt());
  EXPECT_NO_THROW(time_shift(s, 20, 40 * s.grid.dt()));
  EXPECT_THROW(time_shift(s, 20, 41 * s.grid.dt()), AugmentError);
  EXPECT_THROW(time_shift(s, 20, -s.grid.dt()), AugmentError);
}

TEST(GalileanBoost, IdentityAndConstant) {
  const FieldSample s = kdv_sample(9, 1.5, true);
  EXPECT_EQ(galilean_boost(s, 0.0).u, s.u);
  FieldSample c = s;
  c.u.fill(0.8);
  const FieldSample b = galilean_boost(c, 0.3);
  for (double v : b.u.values()) EXPECT_NEAR(v, 1.1, 1e-13);
}

TEST(GalileanBoost, GroupLaw) {
  const FieldSample s = kdv_sample(10, 2.0, true);
  EXPECT_LT(max_diff(galilean_boost(galilean_boost(s, 0.2), -0.05).u, galilean_boost(s, 0.15).u), 1e-12);
  EXPECT_LT(max_diff(galilean_boost(galilean_boost(s, 0.2), -0.2).u, s.u), 1e-12);
  EXPECT_EQ(galilean_boost(s, 0.2).spec.coeffs, s.spec.coeffs);
}

TEST(GalileanBoost, PreservesPdeResidual) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const FieldSample s = kdv_sample(seed, 1.0, false);
    const double r0 = kdv_residual(s);
    for (double eps : {0.1, -0.1, 0.3}) {
      const double r1 = kdv_residual(galilean_boost(s, eps));
      EXPECT_LE(r1, 3.0 * r0) << "seed " << seed << " eps " << eps;
    }
    // A plain offset without the matching shift is not a symmetry.
    FieldSample wrong = s;
    for (auto& v : wrong.u.values()) v += 0.3;
    EXPECT_GT(kdv_residual(wrong), 3.0 * r0);
  }
}

TEST(Augment, ProbabilityZeroAndZeroEpsAreIdentity) {
  const FieldSample s = kdv_sample(14, 1.0, true);
  AugmentConfig cfg = default_config(s, 0.0);
  EXPECT_TRUE(cfg.groups.count(Group::GalileanBoost));
  Rng rng(1);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(augment(s, cfg, rng).u, s.u);
  cfg.probability = 1.0;
  cfg.eps_space = 0.0;
  cfg.eps_boost = 0.0;
  for (int i = 0; i < 5; ++i) EXPECT_EQ(augment(s, cfg, rng).u, s.u);
}

TEST(Augment, AppliesAtConfiguredRate) {
  const FieldSample s = kdv_sample(15, 1.0, true);
  const AugmentConfig cfg = default_config(s, 0.3);
  Rng rng(2);
  int changed = 0;
  for (int i = 0; i < 2000; ++i) changed += augment(s, cfg, rng).u == s.u ? 0 : 1;
  EXPECT_NEAR(changed / 2000.0, 0.3, 0.03);
}

TEST(Augment, TimeShiftWindowInRange) {
  const FieldSample s = kdv_sample(16, 1.0, true);
  AugmentConfig cfg;
  cfg.probability = 1.0;
  cfg.groups = {Group::TimeShift};
  cfg.window_len = 20;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const FieldSample w = augment(s, cfg, rng);
    EXPECT_EQ(w.grid.nt, 20u);
    const auto k = static_cast<std::size_t>(std::round((w.grid.t0 - s.grid.t0) / s.grid.dt()));
    EXPECT_LE(k, 10u);
    EXPECT_EQ(w.u.at(0, 5), s.u.at(k, 5));
  }
  cfg.window_len = 0;
  EXPECT_THROW(augment(s, cfg, rng), AugmentError);
}

TEST(Augment, BatchResidualStaysWithinFactor) {
  AugmentConfig cfg;
  cfg.probability = 1.0;
  cfg.groups = {Group::TimeShift, Group::SpaceShiftX, Group::GalileanBoost};
  cfg.window_len = 40;
  Rng rng(4);
  double base = 0.0, aug = 0.0;
  for (std::uint64_t seed = 20; seed < 28; ++seed) {
    Rng crng(seed);
    const FieldSample s = kdv_sample(seed, maepde::numkit::uniform(crng, 0.0, 3.0), false);
    base += kdv_residual(time_shift(s, 40, 0.0));
    aug += kdv_residual(augment(s, cfg, rng));
  }
  EXPECT_LE(aug, 3.0 * base);
}

TEST(Augment, TwoDimensionalShifts) {
  const FieldSample q = ns_sample(17);
  const AugmentConfig cfg = default_config(q, 1.0);
  EXPECT_TRUE(cfg.groups.count(Group::SpaceShiftY));
  EXPECT_FALSE(cfg.groups.count(Group::GalileanBoost));
  Rng rng(5);
  const FieldSample a = augment(q, cfg, rng);
  EXPECT_EQ(a.u.shape(), q.u.shape());
  EXPECT_NE(a.u, q.u);
  EXPECT_EQ(group_from_name("galilean_boost"), Group::GalileanBoost);
  EXPECT_THROW(group_from_name("scale"), AugmentError);
}

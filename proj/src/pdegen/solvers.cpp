#include "maepde/pdegen/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "maepde/numkit/fft.hpp"

namespace maepde::pdegen {
namespace {

using numkit::Complex;
using numkit::Spectrum;
using CVec = std::vector<Complex>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_state(const Tensor& u, std::size_t step, const char* who) {
  if (!u.all_finite()) throw SolverError(std::string(who) + ": non-finite state at output step " + std::to_string(step));
}

// phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, by Taylor series near 0.
Complex phi1(Complex z) {
  if (std::abs(z) < 0.1) {
    Complex term = 1.0, s = 0.0;
    for (int n = 1; n <= 10; ++n) {
      s += term;
      term *= z / static_cast<double>(n + 1);
    }
    return s;
  }
  return (std::exp(z) - 1.0) / z;
}

Complex phi2(Complex z) {
  if (std::abs(z) < 0.1) {
    Complex term = 0.5, s = 0.0;
    for (int n = 2; n <= 11; ++n) {
      s += term;
      term *= z / static_cast<double>(n + 1);
    }
    return s;
  }
  return (std::exp(z) - 1.0 - z) / (z * z);
}

// Exponential time differencing of order 2 for u' = L u + N(u, t) with
// diagonal L in Fourier space.
struct Etd2 {
  CVec e, p1, p2;
  double h = 0.0;

  Etd2(const CVec& lin, double step) : e(lin.size()), p1(lin.size()), p2(lin.size()), h(step) {
    for (std::size_t i = 0; i < lin.size(); ++i) {
      const Complex z = lin[i] * step;
      e[i] = std::exp(z);
      p1[i] = step * phi1(z);
      p2[i] = step * phi2(z);
    }
  }

  template <class NFn>
  void step(CVec& u, double t, NFn&& nonlinear) const {
    const CVec n0 = nonlinear(u, t);
    CVec a(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) a[i] = e[i] * u[i] + p1[i] * n0[i];
    const CVec n1 = nonlinear(a, t + h);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = a[i] + p2[i] * (n1[i] - n0[i]);
  }
};

// Spectral-viscosity damping rate of order 36 that matches one application
// of the exponential filter exp(-36 (m/M)^36) per reference interval tau.
double filter_rate(double m_over_max, double tau) { return 36.0 * std::pow(m_over_max, 36.0) / tau; }

struct Spectral1d {
  std::size_t n;
  std::vector<double> k;    // rfft wavenumbers
  std::vector<double> kd;   // first-derivative wavenumbers (Nyquist zeroed)
  std::vector<bool> keep;   // 2/3-rule mask

  Spectral1d(std::size_t nx, double length) : n(nx), k(numkit::rfft_wavenumbers(nx, length)) {
    kd = k;
    if (n % 2 == 0) kd.back() = 0.0;
    keep.resize(k.size());
    for (std::size_t m = 0; m < k.size(); ++m) keep[m] = 3 * m < n;
  }

  CVec forward(const std::vector<double>& u) const {
    Spectrum s = numkit::rfft(Tensor(Shape{n}, u), 0);
    return s.values;
  }

  std::vector<double> inverse(const CVec& c) const {
    Spectrum s(Shape{c.size()});
    s.values = c;
    return numkit::irfft(s, 0, n).storage();
  }

  // -ik FFT(u^2/2), dealiased.
  CVec flux_derivative(const CVec& uh) const {
    CVec t = uh;
    for (std::size_t m = 0; m < t.size(); ++m)
      if (!keep[m]) t[m] = 0.0;
    std::vector<double> u = inverse(t);
    for (auto& v : u) v = 0.5 * v * v;
    CVec f = forward(u);
    for (std::size_t m = 0; m < f.size(); ++m) f[m] = keep[m] ? Complex(0.0, -kd[m]) * f[m] : Complex{};
    return f;
  }
};

void set_row(Tensor& u, std::size_t n, const std::vector<double>& v) { std::copy(v.begin(), v.end(), u.data() + n * v.size()); }

// Drives an Etd2 scheme over the grid's output times.
template <class NFn>
Tensor run_1d(const Spectral1d& sp, const CVec& lin, const std::vector<double>& u0, const Grid& grid,
              std::size_t substeps, NFn&& nonlinear, const char* who) {
  require(grid.periodic && !grid.two_d(), std::string(who) + ": needs a periodic 1D grid");
  require(u0.size() == grid.nx, std::string(who) + ": initial condition length mismatch");
  require(substeps > 0, std::string(who) + ": substeps must be positive");
  Tensor out(grid.field_shape());
  set_row(out, 0, u0);
  check_state(out, 0, who);
  const double h = grid.dt() / static_cast<double>(substeps);
  const Etd2 scheme(lin, h);
  CVec uh = sp.forward(u0);
  for (std::size_t n = 1; n < grid.nt; ++n) {
    for (std::size_t s = 0; s < substeps; ++s) {
      scheme.step(uh, grid.t(n - 1) + h * static_cast<double>(s), nonlinear);
    }
    std::vector<double> u = sp.inverse(uh);
    for (double v : u)
      if (!std::isfinite(v)) throw SolverError(std::string(who) + ": non-finite state at output step " + std::to_string(n));
    set_row(out, n, u);
  }
  return out;
}

}  // namespace

std::vector<double> initial_condition_1d(const PdeSpec& spec, const Grid& grid) {
  std::vector<double> u(grid.nx);
  for (std::size_t i = 0; i < grid.nx; ++i) {
    const double x = grid.x(i);
    if (spec.bc == Boundary::Neumann && spec.family == Family::Heat1D) {
      double s = 0.0;
      for (const auto& t : spec.ic.terms)
        s += t.amp * std::cos(2.0 * std::numbers::pi * t.lx * x / spec.ic.length + t.phase);
      u[i] = s;
    } else {
      u[i] = eval_delta(spec.ic, 0.0, x);
    }
  }
  return u;
}

Tensor initial_condition_2d(const PdeSpec& spec, const Grid& grid) {
  Tensor u(Shape{grid.nx, grid.ny});
  for (std::size_t i = 0; i < grid.nx; ++i)
    for (std::size_t j = 0; j < grid.ny; ++j) u.at(i, j) = eval_delta_2d(spec.ic, 0.0, grid.x(i), grid.y(j));
  return u;
}

Tensor integrate_kdv_burgers(double alpha, double beta, double gamma, const ForcingParams* forcing,
                             const std::vector<double>& u0, const Grid& grid, const SolverOptions& opt) {
  const Spectral1d sp(grid.nx, grid.lx());
  const bool nonlinear = alpha != 0.0;
  const double tau = grid.dt() / 10.0;
  const double mmax = static_cast<double>(sp.k.size() - 1);
  CVec lin(sp.k.size());
  for (std::size_t m = 0; m < lin.size(); ++m) {
    const double k = sp.k[m], kd = sp.kd[m];
    lin[m] = Complex(-beta * k * k, gamma * kd * kd * kd);
    if (nonlinear) lin[m] -= filter_rate(static_cast<double>(m) / mmax, tau);
  }
  std::vector<double> xs(grid.nx);
  for (std::size_t i = 0; i < grid.nx; ++i) xs[i] = grid.x(i);
  auto rhs = [&](const CVec& uh, double t) {
    CVec out = nonlinear ? sp.flux_derivative(uh) : CVec(uh.size());
    if (nonlinear)
      for (auto& v : out) v *= alpha;
    if (forcing) {
      std::vector<double> d(grid.nx);
      for (std::size_t i = 0; i < grid.nx; ++i) d[i] = eval_delta(*forcing, t, xs[i]);
      const CVec dh = sp.forward(d);
      for (std::size_t m = 0; m < out.size(); ++m) out[m] += dh[m];
    }
    return out;
  };
  return run_1d(sp, lin, u0, grid, opt.substeps, rhs, "kdv-burgers");
}

FieldSample solve_kdv_burgers(const PdeSpec& spec, const Grid& grid, const SolverOptions& opt) {
  require(spec.bc == Boundary::Periodic, "kdv-burgers: periodic boundary required");
  FieldSample out;
  out.grid = grid;
  out.spec = spec;
  const ForcingParams* f = spec.forcing ? &*spec.forcing : nullptr;
  out.u = integrate_kdv_burgers(spec.coeff("alpha"), spec.coeff("beta"), spec.coeff("gamma"), f,
                                initial_condition_1d(spec, grid), grid, opt);
  return out;
}

Tensor solve_ks(double nu, const std::vector<double>& u0, const Grid& grid, const SolverOptions& opt) {
  const Spectral1d sp(grid.nx, grid.lx());
  CVec lin(sp.k.size());
  for (std::size_t m = 0; m < lin.size(); ++m) {
    const double k2 = sp.k[m] * sp.k[m];
    lin[m] = nu * k2 - k2 * k2;
  }
  auto rhs = [&](const CVec& uh, double) { return sp.flux_derivative(uh); };
  return run_1d(sp, lin, u0, grid, opt.substeps, rhs, "ks");
}

Tensor solve_advection_1d(double c, const std::vector<double>& u0, const Grid& grid) {
  require(grid.periodic && !grid.two_d(), "advection: needs a periodic 1D grid");
  require(u0.size() == grid.nx, "advection: initial condition length mismatch");
  Tensor ic(Shape{1, grid.nx}, u0);
  Tensor out(grid.field_shape());
  for (std::size_t n = 0; n < grid.nt; ++n) {
    Tensor s = numkit::fourier_shift(ic, 1, c * (grid.t(n) - grid.t0), grid.lx());
    std::copy(s.data(), s.data() + grid.nx, out.data() + n * grid.nx);
  }
  return out;
}

Tensor solve_heat_varbc(double nu, Boundary bc, const std::vector<double>& u0, const Grid& grid,
                        const SolverOptions& opt) {
  require(bc == Boundary::Dirichlet || bc == Boundary::Neumann, "heat FEM: boundary must be Dirichlet or Neumann");
  require(!grid.periodic && !grid.two_d(), "heat FEM: needs a bounded 1D grid");
  require(u0.size() == grid.nx && grid.nx >= 3, "heat FEM: initial condition length mismatch");
  require(nu > 0.0, "heat FEM: diffusivity must be positive");
  const std::size_t n = grid.nx;
  const double h = grid.dx();
  const double dt = grid.dt() / static_cast<double>(opt.substeps);

  // Tridiagonal mass and stiffness matrices of P1 elements.
  std::vector<double> md(n, 2.0 * h / 3.0), mo(n - 1, h / 6.0), kd(n, 2.0 / h), ko(n - 1, -1.0 / h);
  md.front() = md.back() = h / 3.0;
  kd.front() = kd.back() = 1.0 / h;

  // Unknowns: all nodes (Neumann) or interior nodes (Dirichlet).
  const std::size_t lo = bc == Boundary::Dirichlet ? 1 : 0;
  const std::size_t hi = bc == Boundary::Dirichlet ? n - 1 : n;
  const std::size_t m = hi - lo;
  std::vector<double> ad(m), ao(m > 0 ? m - 1 : 0);
  for (std::size_t i = 0; i < m; ++i) ad[i] = md[lo + i] + dt * nu * kd[lo + i];
  for (std::size_t i = 0; i + 1 < m; ++i) ao[i] = mo[lo + i] + dt * nu * ko[lo + i];

  // Thomas factorization, reused every step.
  std::vector<double> cp(m), dinv(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double denom = ad[i] - (i > 0 ? ao[i - 1] * cp[i - 1] : 0.0);
    if (std::abs(denom) < 1e-300) throw std::runtime_error("heat FEM: singular system matrix");
    dinv[i] = 1.0 / denom;
    cp[i] = i + 1 < m ? ao[i] * dinv[i] : 0.0;
  }

  std::vector<double> u = u0;
  if (bc == Boundary::Dirichlet) u.front() = u.back() = 0.0;
  Tensor out(grid.field_shape());
  set_row(out, 0, u);
  std::vector<double> rhs(m), y(m);
  for (std::size_t step = 1; step < grid.nt; ++step) {
    for (std::size_t s = 0; s < opt.substeps; ++s) {
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t g = lo + i;
        double r = md[g] * u[g];
        if (g > 0) r += mo[g - 1] * u[g - 1];
        if (g + 1 < n) r += mo[g] * u[g + 1];
        rhs[i] = r;
      }
      for (std::size_t i = 0; i < m; ++i) y[i] = (rhs[i] - (i > 0 ? ao[i - 1] * y[i - 1] : 0.0)) * dinv[i];
      for (std::size_t i = m; i-- > 0;) y[i] -= i + 1 < m ? cp[i] * y[i + 1] : 0.0;
      for (std::size_t i = 0; i < m; ++i) u[lo + i] = y[i];
    }
    set_row(out, step, u);
    check_state(out, step, "heat FEM");
  }
  return out;
}

double wave_energy(const std::vector<double>& prev, const std::vector<double>& next, Boundary bc, double c,
                   double dt, double dx) {
  const std::size_t n = prev.size();
  double kin = 0.0, pot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (bc == Boundary::Neumann && (i == 0 || i + 1 == n)) ? 0.5 : 1.0;
    const double v = (next[i] - prev[i]) / dt;
    kin += 0.5 * w * v * v;
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    pot += 0.5 * c * c * (next[i + 1] - next[i]) * (prev[i + 1] - prev[i]) / (dx * dx);
  return (kin + pot) * dx;
}

Tensor solve_wave(Boundary bc, double pulse_center, const Grid& grid, const SolverOptions& opt, double c,
                  double sigma) {
  require(bc == Boundary::Dirichlet || bc == Boundary::Neumann, "wave: boundary must be Dirichlet or Neumann");
  require(!grid.periodic && !grid.two_d() && grid.nx >= 3, "wave: needs a bounded 1D grid");
  const std::size_t n = grid.nx;
  const double dx = grid.dx();
  const double dt_out = grid.dt();
  const std::size_t sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(c * dt_out / (opt.cfl * dx) - 1e-12)));
  const double dt = dt_out / static_cast<double>(sub);
  const double r2 = (c * dt / dx) * (c * dt / dx);
  if (c * dt / dx > 1.0) throw std::invalid_argument("wave: CFL number " + std::to_string(c * dt / dx) + " exceeds 1");

  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = grid.x(i) - pulse_center;
    u[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  if (bc == Boundary::Dirichlet) u.front() = u.back() = 0.0;

  auto laplace = [&](const std::vector<double>& v, std::size_t i) {
    if (i == 0) return 2.0 * (v[1] - v[0]);
    if (i + 1 == n) return 2.0 * (v[n - 2] - v[n - 1]);
    return v[i + 1] - 2.0 * v[i] + v[i - 1];
  };
  const std::size_t lo = bc == Boundary::Dirichlet ? 1 : 0;
  const std::size_t hi = bc == Boundary::Dirichlet ? n - 1 : n;

  Tensor out(grid.field_shape());
  set_row(out, 0, u);
  // Zero initial velocity: Taylor start u^1 = u^0 + (r^2/2) D u^0.
  std::vector<double> prev = u, cur = u, next(n, 0.0);
  for (std::size_t i = lo; i < hi; ++i) cur[i] = u[i] + 0.5 * r2 * laplace(u, i);
  std::size_t done = 1;
  for (std::size_t step = 1; step < grid.nt; ++step) {
    while (done < step * sub) {
      for (std::size_t i = lo; i < hi; ++i) next[i] = 2.0 * cur[i] - prev[i] + r2 * laplace(cur, i);
      std::swap(prev, cur);
      std::swap(cur, next);
      ++done;
    }
    set_row(out, step, cur);
    check_state(out, step, "wave");
  }
  return out;
}

namespace {

struct Spectral2d {
  std::size_t nx, ny, nyh;
  std::vector<double> kx, ky, kxd, kyd;
  std::vector<bool> keep;

  Spectral2d(const Grid& g)
      : nx(g.nx), ny(g.ny), nyh(g.ny / 2 + 1), kx(numkit::fft_wavenumbers(g.nx, g.lx())),
        ky(numkit::rfft_wavenumbers(g.ny, g.ly())) {
    kxd = kx;
    kyd = ky;
    if (nx % 2 == 0) kxd[nx / 2] = 0.0;
    if (ny % 2 == 0) kyd.back() = 0.0;
    keep.resize(nx * nyh);
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t mi = i <= nx / 2 ? i : nx - i;
      for (std::size_t j = 0; j < nyh; ++j) keep[i * nyh + j] = 3 * mi < nx && 3 * j < ny;
    }
  }

  std::size_t size() const { return nx * nyh; }
  double k2(std::size_t idx) const {
    const double a = kx[idx / nyh], b = ky[idx % nyh];
    return a * a + b * b;
  }
  // Largest normalized mode index, for the spectral filter.
  double mode_ratio(std::size_t idx) const {
    const std::size_t i = idx / nyh, j = idx % nyh;
    const double mi = static_cast<double>(i <= nx / 2 ? i : nx - i) / static_cast<double>(nx / 2);
    const double mj = static_cast<double>(j) / static_cast<double>(ny / 2);
    return std::max(mi, mj);
  }

  CVec forward(const Tensor& u) const { return numkit::rfft2(u).values; }
  Tensor inverse(const CVec& c) const {
    Spectrum s(Shape{nx, nyh});
    s.values = c;
    return numkit::irfft2(s, ny);
  }
  CVec truncated(const CVec& c) const {
    CVec t = c;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!keep[i]) t[i] = 0.0;
    return t;
  }
};

void set_slice(Tensor& out, std::size_t n, const Tensor& u) { std::copy(u.data(), u.data() + u.size(), out.data() + n * u.size()); }

}  // namespace

Tensor solve_2d(Family family, const PdeSpec& spec, const Tensor& u0, const Grid& grid, const SolverOptions& opt) {
  require(family == Family::Heat2D || family == Family::Advection2D || family == Family::Burgers2D,
          "solve_2d: unsupported family " + family_name(family));
  require(grid.periodic && grid.two_d(), "solve_2d: needs a periodic 2D grid");
  require(u0.shape() == Shape({grid.nx, grid.ny}), "solve_2d: initial condition shape mismatch");
  const Spectral2d sp(grid);
  const double nu = spec.coeffs.count("nu") ? spec.coeff("nu") : 0.0;
  const double cx = spec.coeffs.count("cx") ? spec.coeff("cx") : 0.0;
  const double cy = spec.coeffs.count("cy") ? spec.coeff("cy") : 0.0;
  const bool burgers = family == Family::Burgers2D;
  const double tau = grid.dt() / 10.0;

  CVec lin(sp.size());
  for (std::size_t idx = 0; idx < lin.size(); ++idx) {
    const double ax = sp.kxd[idx / sp.nyh], ay = sp.kyd[idx % sp.nyh];
    if (burgers) {
      lin[idx] = -nu * sp.k2(idx) - filter_rate(sp.mode_ratio(idx), tau);
    } else {
      lin[idx] = Complex(-nu * sp.k2(idx), -(cx * ax + cy * ay));
    }
  }
  auto rhs = [&](const CVec& uh, double) {
    if (!burgers) return CVec(uh.size());
    // -u (c . grad u) = -(c . grad)(u^2/2)
    Tensor u = sp.inverse(sp.truncated(uh));
    for (auto& v : u.values()) v = 0.5 * v * v;
    CVec f = sp.forward(u);
    for (std::size_t idx = 0; idx < f.size(); ++idx) {
      const double ax = sp.kxd[idx / sp.nyh], ay = sp.kyd[idx % sp.nyh];
      f[idx] = sp.keep[idx] ? Complex(0.0, -(cx * ax + cy * ay)) * f[idx] : Complex{};
    }
    return f;
  };

  Tensor out(grid.field_shape());
  set_slice(out, 0, u0);
  const double h = grid.dt() / static_cast<double>(opt.substeps);
  const Etd2 scheme(lin, h);
  CVec uh = sp.forward(u0);
  for (std::size_t n = 1; n < grid.nt; ++n) {
    for (std::size_t s = 0; s < opt.substeps; ++s) scheme.step(uh, grid.t(n - 1) + h * static_cast<double>(s), rhs);
    Tensor u = sp.inverse(uh);
    if (!u.all_finite()) throw SolverError(family_name(family) + ": non-finite state at output step " + std::to_string(n));
    set_slice(out, n, u);
  }
  return out;
}

std::pair<Tensor, Tensor> ns_velocity(const Tensor& w, const Grid& grid) {
  const Spectral2d sp(grid);
  const CVec wh = sp.forward(w);
  CVec uh(wh.size()), vh(wh.size());
  for (std::size_t idx = 0; idx < wh.size(); ++idx) {
    const double k2 = sp.k2(idx);
    if (k2 == 0.0) continue;
    const Complex psi = wh[idx] / k2;
    uh[idx] = Complex(0.0, sp.ky[idx % sp.nyh]) * psi;
    vh[idx] = Complex(0.0, -sp.kx[idx / sp.nyh]) * psi;
  }
  return {sp.inverse(uh), sp.inverse(vh)};
}

Tensor solve_ns_vorticity(double nu, double forcing_amp, const Tensor& w0, const Grid& grid, const SolverOptions& opt) {
  require(grid.periodic && grid.two_d(), "ns: needs a periodic 2D grid");
  require(w0.shape() == Shape({grid.nx, grid.ny}), "ns: initial vorticity shape mismatch");
  const Spectral2d sp(grid);
  const double tau = grid.dt() / 10.0;
  CVec lin(sp.size());
  for (std::size_t idx = 0; idx < lin.size(); ++idx) lin[idx] = -nu * sp.k2(idx) - filter_rate(sp.mode_ratio(idx), tau);

  Tensor f(Shape{grid.nx, grid.ny});
  for (std::size_t i = 0; i < grid.nx; ++i)
    for (std::size_t j = 0; j < grid.ny; ++j) {
      const double s = 2.0 * std::numbers::pi * (grid.x(i) + grid.y(j));
      f.at(i, j) = forcing_amp * (std::sin(s) + std::cos(s));
    }
  const CVec fh = sp.forward(f);

  // -div(u w) + f, with u from the streamfunction of the dealiased vorticity.
  auto rhs = [&](const CVec& wh, double) {
    CVec t = sp.truncated(wh), uh(t.size()), vh(t.size());
    for (std::size_t idx = 0; idx < t.size(); ++idx) {
      const double k2 = sp.k2(idx);
      if (k2 == 0.0) continue;
      const Complex psi = t[idx] / k2;
      uh[idx] = Complex(0.0, sp.ky[idx % sp.nyh]) * psi;
      vh[idx] = Complex(0.0, -sp.kx[idx / sp.nyh]) * psi;
    }
    Tensor w = sp.inverse(t), u = sp.inverse(uh), v = sp.inverse(vh);
    Tensor uw = u, vw = v;
    for (std::size_t i = 0; i < w.size(); ++i) {
      uw[i] *= w[i];
      vw[i] *= w[i];
    }
    const CVec a = sp.forward(uw), b = sp.forward(vw);
    CVec out(t.size());
    for (std::size_t idx = 0; idx < out.size(); ++idx) {
      const double ax = sp.kxd[idx / sp.nyh], ay = sp.kyd[idx % sp.nyh];
      out[idx] = (sp.keep[idx] ? -Complex(0.0, ax) * a[idx] - Complex(0.0, ay) * b[idx] : Complex{}) + fh[idx];
    }
    return out;
  };

  Tensor out(grid.field_shape());
  set_slice(out, 0, w0);
  CVec wh = sp.forward(w0);
  std::map<std::size_t, Etd2> schemes;
  const double dmin = std::min(grid.dx(), grid.dy());
  for (std::size_t n = 1; n < grid.nt; ++n) {
    auto [u, v] = ns_velocity(sp.inverse(wh), grid);
    double umax = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) umax = std::max(umax, std::hypot(u[i], v[i]));
    std::size_t sub = opt.substeps;
    if (umax > 0.0) sub = std::max(sub, static_cast<std::size_t>(std::ceil(grid.dt() * umax / (opt.cfl * dmin))));
    auto it = schemes.find(sub);
    if (it == schemes.end()) it = schemes.emplace(sub, Etd2(lin, grid.dt() / static_cast<double>(sub))).first;
    const Etd2& scheme = it->second;
    for (std::size_t s = 0; s < sub; ++s) scheme.step(wh, grid.t(n - 1) + scheme.h * static_cast<double>(s), rhs);
    Tensor w = sp.inverse(wh);
    if (!w.all_finite()) throw SolverError("ns: non-finite state at output step " + std::to_string(n));
    set_slice(out, n, w);
  }
  return out;
}

Tensor grf_ic(Rng& rng, const Grid& grid, const GrfParams& p) {
  require(grid.periodic && grid.two_d(), "grf: needs a periodic 2D grid");
  const std::size_t nx = grid.nx, ny = grid.ny;
  const double sigma = p.sigma > 0.0 ? p.sigma : std::pow(p.tau, p.alpha - 1.0);
  Tensor noise(Shape{nx, ny});
  for (auto& v : noise.values()) v = numkit::normal(rng);
  Spectrum s = numkit::rfft2(noise);
  const auto kx = numkit::fft_wavenumbers(nx, 2.0 * std::numbers::pi);
  const auto ky = numkit::rfft_wavenumbers(ny, 2.0 * std::numbers::pi);
  const double norm = std::sqrt(2.0 * static_cast<double>(nx * ny));
  const std::size_t nyh = ky.size();
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < nyh; ++j) {
      // Integer wavenumbers in cycles per unit length.
      const double k2 = kx[i] * kx[i] + ky[j] * ky[j];
      const double amp = sigma * std::pow(4.0 * std::numbers::pi * std::numbers::pi * k2 + p.tau * p.tau, -p.alpha / 2.0);
      s[i * nyh + j] *= norm * amp;
    }
  s[0] = 0.0;
  return numkit::irfft2(s, ny);
}

}  // namespace maepde::pdegen

#include "maepde/pdegen/pde.hpp"

#include <cmath>
#include <numbers>

#include "maepde/pdegen/solvers.hpp"

namespace maepde::pdegen {
namespace {

using numkit::uniform;
using numkit::uniform_index;

const std::vector<std::pair<Family, const char*>> kFamilyNames = {
    {Family::KdVBurgers, "kdv_burgers"},   {Family::Heat1D, "heat1d"},       {Family::BurgersInviscid1D, "burgers1d"},
    {Family::Advection1D, "advection1d"},  {Family::Wave1D, "wave1d"},       {Family::KS1D, "ks1d"},
    {Family::Heat2D, "heat2d"},            {Family::Advection2D, "advection2d"}, {Family::Burgers2D, "burgers2d"},
    {Family::NS2D, "ns2d"},
};

ForcingParams sample_series(Rng& rng, double length, bool two_d) {
  ForcingParams f;
  f.length = length;
  for (int j = 0; j < 5; ++j) {
    ForcingTerm t;
    t.amp = uniform(rng, -0.5, 0.5);
    t.omega = uniform(rng, -0.4, 0.4);
    t.lx = 1 + static_cast<int>(uniform_index(rng, 3));
    t.ly = two_d ? 1 + static_cast<int>(uniform_index(rng, 3)) : 0;
    t.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    f.terms.push_back(t);
  }
  return f;
}

// Sine/cosine series for bounded heat: phases restricted to {0, pi}, no time dependence.
ForcingParams sample_bounded_series(Rng& rng, double length) {
  ForcingParams f;
  f.length = length;
  for (int j = 0; j < 5; ++j) {
    ForcingTerm t;
    t.amp = uniform(rng, -0.5, 0.5);
    t.omega = 0.0;
    t.lx = 1 + static_cast<int>(uniform_index(rng, 3));
    t.phase = uniform_index(rng, 2) == 0 ? 0.0 : std::numbers::pi;
    f.terms.push_back(t);
  }
  return f;
}

}  // namespace

std::string family_name(Family f) {
  for (const auto& [fam, name] : kFamilyNames)
    if (fam == f) return name;
  return "unknown";
}

Family family_from_name(const std::string& name) {
  for (const auto& [fam, n] : kFamilyNames)
    if (name == n) return fam;
  throw std::invalid_argument("unknown PDE family '" + name + "'");
}

std::string boundary_name(Boundary b) {
  switch (b) {
    case Boundary::Periodic: return "periodic";
    case Boundary::Dirichlet: return "dirichlet";
    case Boundary::Neumann: return "neumann";
  }
  return "unknown";
}

Boundary boundary_from_name(const std::string& name) {
  if (name == "periodic") return Boundary::Periodic;
  if (name == "dirichlet") return Boundary::Dirichlet;
  if (name == "neumann") return Boundary::Neumann;
  throw std::invalid_argument("unknown boundary condition '" + name + "'");
}

bool is_2d(Family f) {
  return f == Family::Heat2D || f == Family::Advection2D || f == Family::Burgers2D || f == Family::NS2D;
}

double eval_delta(const ForcingParams& f, double t, double x) {
  double s = 0.0;
  for (const auto& term : f.terms)
    s += term.amp * std::sin(term.omega * t + 2.0 * std::numbers::pi * term.lx * x / f.length + term.phase);
  return s;
}

double eval_delta_2d(const ForcingParams& f, double t, double x, double y) {
  double s = 0.0;
  for (const auto& term : f.terms)
    s += term.amp *
         std::sin(term.omega * t + 2.0 * std::numbers::pi * (term.lx * x + term.ly * y) / f.length + term.phase);
  return s;
}

double PdeSpec::coeff(const std::string& name) const {
  auto it = coeffs.find(name);
  if (it == coeffs.end()) throw std::invalid_argument("spec for " + family_name(family) + " has no coefficient " + name);
  return it->second;
}

double Grid::dt() const {
  if (nt < 2) return 0.0;
  return (t1 - t0) / static_cast<double>(nt - 1);
}

double Grid::dx() const { return periodic ? lx() / static_cast<double>(nx) : lx() / static_cast<double>(nx - 1); }

double Grid::dy() const {
  if (ny == 0) return 0.0;
  return periodic ? ly() / static_cast<double>(ny) : ly() / static_cast<double>(ny - 1);
}

Shape Grid::field_shape() const { return two_d() ? Shape{nt, nx, ny} : Shape{nt, nx}; }

Grid default_grid(Family f, Boundary bc) {
  Grid g;
  switch (f) {
    case Family::KdVBurgers:
    case Family::Heat1D:
    case Family::BurgersInviscid1D:
    case Family::Advection1D:
      g.nt = 250, g.nx = 100, g.t1 = 2.0, g.x0 = 0.0, g.x1 = 16.0;
      g.periodic = bc == Boundary::Periodic;
      break;
    case Family::Wave1D:
      g.nt = 250, g.nx = 100, g.t1 = 100.0, g.x0 = -8.0, g.x1 = 8.0, g.periodic = false;
      break;
    case Family::KS1D:
      g.nt = 100, g.nx = 100, g.t1 = 100.0, g.x0 = 0.0, g.x1 = 64.0;
      break;
    case Family::Heat2D:
    case Family::Advection2D:
    case Family::Burgers2D:
      g.nt = 100, g.nx = 64, g.ny = 64, g.t1 = 2.0, g.x0 = -1.0, g.x1 = 1.0, g.y0 = -1.0, g.y1 = 1.0;
      break;
    case Family::NS2D:
      g.nt = 100, g.nx = 64, g.ny = 64, g.t1 = 25.0, g.x0 = 0.0, g.x1 = 1.0, g.y0 = 0.0, g.y1 = 1.0;
      break;
  }
  return g;
}

PdeSpec sample_spec(Family family, Rng& rng, Boundary bc) {
  PdeSpec s;
  s.family = family;
  s.bc = Boundary::Periodic;
  switch (family) {
    case Family::KdVBurgers:
      s.coeffs = {{"alpha", uniform(rng, 0.0, 3.0)}, {"beta", uniform(rng, 0.0, 0.4)}, {"gamma", uniform(rng, 0.0, 1.0)}};
      s.forcing = sample_series(rng, 16.0, false);
      s.ic = *s.forcing;
      break;
    case Family::Heat1D: {
      const double nu = uniform(rng, 0.1, 0.8);
      s.coeffs = {{"nu", nu}, {"alpha", 0.0}, {"beta", nu}, {"gamma", 0.0}};
      s.bc = bc;
      if (bc == Boundary::Periodic) {
        s.forcing = sample_series(rng, 16.0, false);
        s.ic = *s.forcing;
      } else {
        s.ic = sample_bounded_series(rng, 16.0);
      }
      break;
    }
    case Family::BurgersInviscid1D:
      s.coeffs = {{"alpha", 0.5}, {"beta", 0.0}, {"gamma", 0.0}};
      s.forcing = sample_series(rng, 16.0, false);
      s.ic = *s.forcing;
      break;
    case Family::Advection1D:
      s.coeffs = {{"c", uniform(rng, 0.1, 5.0)}};
      s.ic = sample_series(rng, 16.0, false);
      break;
    case Family::Wave1D:
      s.coeffs = {{"c", 2.0}};
      s.bc = bc == Boundary::Periodic ? (uniform_index(rng, 2) == 0 ? Boundary::Dirichlet : Boundary::Neumann) : bc;
      s.pulse_center = uniform(rng, -5.0, 5.0);
      break;
    case Family::KS1D:
      s.coeffs = {{"nu", uniform(rng, 0.75, 1.25)}};
      s.ic = sample_series(rng, 64.0, false);
      break;
    case Family::Heat2D:
      s.coeffs = {{"nu", uniform(rng, 2e-3, 2e-2)}, {"cx", 0.0}, {"cy", 0.0}};
      s.ic = sample_series(rng, 2.0, true);
      break;
    case Family::Advection2D:
      s.coeffs = {{"nu", 0.0}, {"cx", uniform(rng, 0.1, 2.5)}, {"cy", uniform(rng, 0.1, 2.5)}};
      s.ic = sample_series(rng, 2.0, true);
      break;
    case Family::Burgers2D:
      s.coeffs = {{"nu", uniform(rng, 7.5e-3, 1.5e-2)}, {"cx", uniform(rng, 0.5, 1.0)}, {"cy", uniform(rng, 0.5, 1.0)}};
      s.ic = sample_series(rng, 2.0, true);
      break;
    case Family::NS2D: {
      const double mant = 1.0 + static_cast<double>(uniform_index(rng, 9));
      const double expo = 6.0 + static_cast<double>(uniform_index(rng, 4));
      const double amp = (1.0 + static_cast<double>(uniform_index(rng, 10))) * 1e-3;
      s.coeffs = {{"nu", mant * std::pow(10.0, -expo)}, {"A", amp}};
      break;
    }
  }
  s.seed = rng();
  return s;
}

FieldSample solve(const PdeSpec& spec, const Grid& grid) {
  FieldSample out;
  out.grid = grid;
  out.spec = spec;
  switch (spec.family) {
    case Family::KdVBurgers:
    case Family::BurgersInviscid1D:
      out.u = solve_kdv_burgers(spec, grid).u;
      break;
    case Family::Heat1D:
      if (spec.bc == Boundary::Periodic) {
        out.u = solve_kdv_burgers(spec, grid).u;
      } else {
        out.u = solve_heat_varbc(spec.coeff("nu"), spec.bc, initial_condition_1d(spec, grid), grid);
      }
      break;
    case Family::Advection1D:
      out.u = solve_advection_1d(spec.coeff("c"), initial_condition_1d(spec, grid), grid);
      break;
    case Family::Wave1D:
      out.u = solve_wave(spec.bc, spec.pulse_center, grid, {}, spec.coeff("c"));
      break;
    case Family::KS1D:
      out.u = solve_ks(spec.coeff("nu"), initial_condition_1d(spec, grid), grid);
      break;
    case Family::Heat2D:
    case Family::Advection2D:
    case Family::Burgers2D:
      out.u = solve_2d(spec.family, spec, initial_condition_2d(spec, grid), grid);
      break;
    case Family::NS2D: {
      Rng rng(spec.seed);
      out.u = solve_ns_vorticity(spec.coeff("nu"), spec.coeff("A"), grf_ic(rng, grid), grid);
      break;
    }
  }
  return out;
}

namespace {

std::size_t stride_for(std::size_t source, std::size_t target, bool periodic, const char* axis) {
  if (target == 0 || target > source) {
    throw std::invalid_argument(std::string("downsample: target ") + axis + "=" + std::to_string(target) +
                                " exceeds source resolution " + std::to_string(source));
  }
  if (periodic) {
    if (source % target != 0) {
      throw std::invalid_argument(std::string("downsample: ") + axis + " target " + std::to_string(target) +
                                  " does not divide " + std::to_string(source));
    }
    return source / target;
  }
  if (target < 2 || (source - 1) % (target - 1) != 0) {
    throw std::invalid_argument(std::string("downsample: bounded ") + axis + " needs (n-1) divisible by (target-1)");
  }
  return (source - 1) / (target - 1);
}

}  // namespace

FieldSample downsample(const FieldSample& s, std::size_t target_nx, std::size_t target_ny) {
  const Grid& g = s.grid;
  const std::size_t sx = stride_for(g.nx, target_nx, g.periodic, "nx");
  std::size_t sy = 1;
  if (g.two_d()) sy = stride_for(g.ny, target_ny == 0 ? g.ny : target_ny, g.periodic, "ny");
  FieldSample out = s;
  out.grid.nx = target_nx;
  if (g.two_d()) out.grid.ny = target_ny == 0 ? g.ny : target_ny;
  out.u = Tensor(out.grid.field_shape());
  for (std::size_t n = 0; n < g.nt; ++n) {
    if (!g.two_d()) {
      for (std::size_t i = 0; i < target_nx; ++i) out.u.at(n, i) = s.u.at(n, i * sx);
    } else {
      for (std::size_t i = 0; i < target_nx; ++i)
        for (std::size_t j = 0; j < out.grid.ny; ++j) out.u.at(n, i, j) = s.u.at(n, i * sx, j * sy);
    }
  }
  return out;
}

}  // namespace maepde::pdegen

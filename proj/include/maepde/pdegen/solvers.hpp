#pragma once

#include <utility>

#include "maepde/pdegen/pde.hpp"

namespace maepde::pdegen {

struct SolverOptions {
  /// Internal steps per output interval for the exponential integrators.
  std::size_t substeps = 10;
  /// Courant number for the wave solver.
  double cfl = 0.5;
};

/// u_t + a u u_x - b u_xx + g u_xxx = delta(t, x), periodic. Uses
/// coefficients alpha, beta, gamma and spec.forcing (may be absent); the IC is
/// spec.ic evaluated at t = 0.
FieldSample solve_kdv_burgers(const PdeSpec& spec, const Grid& grid, const SolverOptions& opt = {});

/// Same integrator from an explicit initial field.
Tensor integrate_kdv_burgers(double alpha, double beta, double gamma, const ForcingParams* forcing,
                             const std::vector<double>& u0, const Grid& grid, const SolverOptions& opt = {});

/// P1 finite elements with implicit Euler; Dirichlet or Neumann ends.
Tensor solve_heat_varbc(double nu, Boundary bc, const std::vector<double>& u0, const Grid& grid,
                        const SolverOptions& opt = {});

/// Exact spectral transport of the IC at speed c.
Tensor solve_advection_1d(double c, const std::vector<double>& u0, const Grid& grid);

/// Leapfrog for u_tt = c^2 u_xx with a unit Gaussian pulse of width `sigma`
/// at rest. Throws if c dt/dx exceeds 1.
Tensor solve_wave(Boundary bc, double pulse_center, const Grid& grid, const SolverOptions& opt = {},
                  double c = 2.0, double sigma = 0.5);

/// Staggered leapfrog energy between consecutive states.
double wave_energy(const std::vector<double>& prev, const std::vector<double>& next, Boundary bc, double c,
                   double dt, double dx);

/// u_t + u u_x + nu u_xx + u_xxxx = 0, periodic.
Tensor solve_ks(double nu, const std::vector<double>& u0, const Grid& grid, const SolverOptions& opt = {});

/// Heat2D, Advection2D or Burgers2D on a periodic grid from the field u0 (nx, ny).
Tensor solve_2d(Family family, const PdeSpec& spec, const Tensor& u0, const Grid& grid, const SolverOptions& opt = {});

/// Vorticity form with forcing A (sin 2pi(x+y) + cos 2pi(x+y)).
Tensor solve_ns_vorticity(double nu, double forcing_amp, const Tensor& w0, const Grid& grid,
                          const SolverOptions& opt = {});

/// Velocity (u, v) from vorticity through the streamfunction.
std::pair<Tensor, Tensor> ns_velocity(const Tensor& w, const Grid& grid);

struct GrfParams {
  double alpha = 2.5;
  double tau = 7.0;
  /// Zero selects tau^(alpha - 1).
  double sigma = 0.0;
};

/// Mean-free periodic Gaussian random field with power spectrum
/// 2 sigma^2 (4 pi^2 |k|^2 + tau^2)^(-alpha) per Fourier coefficient, |k| in cycles per unit length.
Tensor grf_ic(Rng& rng, const Grid& grid, const GrfParams& p = {});

/// Initial fields implied by a spec.
std::vector<double> initial_condition_1d(const PdeSpec& spec, const Grid& grid);
Tensor initial_condition_2d(const PdeSpec& spec, const Grid& grid);

}  // namespace maepde::pdegen

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maepde/numkit/random.hpp"
#include "maepde/numkit/tensor.hpp"

namespace maepde::pdegen {

using numkit::Rng;
using numkit::Shape;
using numkit::Tensor;

enum class Family {
  KdVBurgers,
  Heat1D,
  BurgersInviscid1D,
  Advection1D,
  Wave1D,
  KS1D,
  Heat2D,
  Advection2D,
  Burgers2D,
  NS2D,
};

enum class Boundary { Periodic, Dirichlet, Neumann };

std::string family_name(Family f);
Family family_from_name(const std::string& name);
std::string boundary_name(Boundary b);
Boundary boundary_from_name(const std::string& name);
bool is_2d(Family f);

/// Raised by solvers when the state becomes non-finite.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One term A sin(omega t + 2 pi (lx x + ly y) / L + phase).
struct ForcingTerm {
  double amp = 0.0;
  double omega = 0.0;
  int lx = 1;
  int ly = 0;
  double phase = 0.0;
};

struct ForcingParams {
  std::vector<ForcingTerm> terms;
  double length = 16.0;
};

/// sum_j A_j sin(omega_j t + 2 pi l_j x / L + phi_j)
double eval_delta(const ForcingParams& f, double t, double x);
double eval_delta_2d(const ForcingParams& f, double t, double x, double y);

struct PdeSpec {
  Family family = Family::KdVBurgers;
  std::map<std::string, double> coeffs;
  Boundary bc = Boundary::Periodic;
  /// Source term; absent for unforced families.
  std::optional<ForcingParams> forcing;
  /// Initial-condition series. For forced 1D families this equals `forcing`.
  ForcingParams ic;
  double pulse_center = 0.0;
  std::uint64_t seed = 0;

  double coeff(const std::string& name) const;
};

/// Uniform space-time grid. Periodic axes exclude the right endpoint
/// (dx = L/nx); bounded axes include both endpoints (dx = L/(nx-1)).
/// Output times include both t0 and t1.
struct Grid {
  std::size_t nt = 0, nx = 0, ny = 0;
  double t0 = 0.0, t1 = 1.0;
  double x0 = 0.0, x1 = 1.0;
  double y0 = 0.0, y1 = 1.0;
  bool periodic = true;

  bool two_d() const { return ny > 0; }
  double lx() const { return x1 - x0; }
  double ly() const { return y1 - y0; }
  double dt() const;
  double dx() const;
  double dy() const;
  double t(std::size_t n) const { return t0 + dt() * static_cast<double>(n); }
  double x(std::size_t i) const { return x0 + dx() * static_cast<double>(i); }
  double y(std::size_t j) const { return y0 + dy() * static_cast<double>(j); }
  Shape field_shape() const;
  bool operator==(const Grid&) const = default;
};

Grid default_grid(Family f, Boundary bc = Boundary::Periodic);

struct FieldSample {
  Tensor u;  // (nt, nx) or (nt, nx, ny)
  Grid grid;
  PdeSpec spec;
};

/// Draws coefficients, forcing and initial-condition parameters for `family`.
/// `bc` only matters for Heat1D and Wave1D.
PdeSpec sample_spec(Family family, Rng& rng, Boundary bc = Boundary::Periodic);

/// Solves `spec` on `grid` with the family's solver.
FieldSample solve(const PdeSpec& spec, const Grid& grid);

/// Strided subsample of the spatial axes. Targets must divide the source extent.
FieldSample downsample(const FieldSample& s, std::size_t target_nx, std::size_t target_ny = 0);

}  // namespace maepde::pdegen

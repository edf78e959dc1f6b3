#pragma once

#include <cstddef>
#include <set>
#include <stdexcept>

#include "maepde/numkit/random.hpp"
#include "maepde/pdegen/pde.hpp"

namespace maepde::liesym {

using numkit::Shape;
using numkit::Tensor;
using pdegen::FieldSample;

class AugmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Group { TimeShift, SpaceShiftX, SpaceShiftY, GalileanBoost };

const char* group_name(Group g);
Group group_from_name(const std::string& name);

enum class Axis { X, Y };

struct AugmentConfig {
  double probability = 0.5;
  std::set<Group> groups{Group::SpaceShiftX};
  /// Magnitudes. A negative spatial value means one eighth of the domain
  /// length; a negative time value means ten output steps.
  double eps_space = -1.0;
  double eps_time = -1.0;
  double eps_boost = 0.1;
  /// Window length for TimeShift.
  std::size_t window_len = 0;
};

/// The enabled groups for a family: spatial shifts along each periodic axis,
/// plus the Galilean boost for the KdV-Burgers family.
AugmentConfig default_config(const FieldSample& s, double probability = 0.5);

/// u'(x) = u(x - eps) along `axis`, by per-mode phase rotation.
FieldSample fourier_shift(const FieldSample& s, double eps, Axis axis = Axis::X);

/// Window of `window_len` output steps starting at index round(eps / dt).
FieldSample time_shift(const FieldSample& s, std::size_t window_len, double eps);

/// (x, t, u) -> (x + alpha eps t, t, u + eps).
FieldSample galilean_boost(const FieldSample& s, double eps);

bool supports_boost(const FieldSample& s);

/// With probability cfg.probability applies every enabled group in the order
/// TimeShift, SpaceShiftX, SpaceShiftY, GalileanBoost, each with its own eps.
/// Spatial and boost parameters are drawn from U(-eps_max, eps_max); the time
/// offset from U(0, eps_max), since a trajectory cannot be shifted before its
/// first stored step. When the draw skips augmentation and TimeShift is
/// enabled, the first window is returned.
FieldSample augment(const FieldSample& s, const AugmentConfig& cfg, numkit::Rng& rng);

}  // namespace maepde::liesym

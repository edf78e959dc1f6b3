#include "maepde/liesym/augment.hpp"

#include <cmath>

#include "maepde/numkit/fft.hpp"

namespace maepde::liesym {

using pdegen::Family;

const char* group_name(Group g) {
  switch (g) {
    case Group::TimeShift: return "time_shift";
    case Group::SpaceShiftX: return "space_shift_x";
    case Group::SpaceShiftY: return "space_shift_y";
    case Group::GalileanBoost: return "galilean_boost";
  }
  return "?";
}

Group group_from_name(const std::string& name) {
  for (Group g : {Group::TimeShift, Group::SpaceShiftX, Group::SpaceShiftY, Group::GalileanBoost})
    if (name == group_name(g)) return g;
  throw AugmentError("unknown augmentation group '" + name + "'");
}

bool supports_boost(const FieldSample& s) {
  if (s.grid.two_d() || !s.grid.periodic) return false;
  return s.spec.family == Family::KdVBurgers || s.spec.family == Family::BurgersInviscid1D ||
         s.spec.family == Family::Heat1D;
}

AugmentConfig default_config(const FieldSample& s, double probability) {
  AugmentConfig cfg;
  cfg.probability = probability;
  cfg.groups.clear();
  if (s.grid.periodic) {
    cfg.groups.insert(Group::SpaceShiftX);
    if (s.grid.two_d()) cfg.groups.insert(Group::SpaceShiftY);
  }
  if (supports_boost(s)) cfg.groups.insert(Group::GalileanBoost);
  return cfg;
}

FieldSample fourier_shift(const FieldSample& s, double eps, Axis axis) {
  if (!s.grid.periodic) throw AugmentError("fourier_shift needs a periodic sample");
  if (axis == Axis::Y && !s.grid.two_d()) throw AugmentError("fourier_shift along y on a 1D sample");
  FieldSample out = s;
  if (eps == 0.0) return out;
  const std::size_t dim = axis == Axis::X ? 1 : 2;
  out.u = numkit::fourier_shift(s.u, dim, eps, axis == Axis::X ? s.grid.lx() : s.grid.ly());
  return out;
}

FieldSample time_shift(const FieldSample& s, std::size_t window_len, double eps) {
  if (window_len < 2) throw AugmentError("time_shift window needs at least 2 steps");
  const double k_real = std::round(eps / s.grid.dt());
  if (k_real < 0.0 || k_real + static_cast<double>(window_len) > static_cast<double>(s.grid.nt)) {
    throw AugmentError("time_shift window [" + std::to_string(k_real) + ", +" + std::to_string(window_len) +
                       ") exceeds trajectory of " + std::to_string(s.grid.nt) + " steps");
  }
  const auto k = static_cast<std::size_t>(k_real);
  FieldSample out;
  out.spec = s.spec;
  out.grid = s.grid;
  out.grid.nt = window_len;
  out.grid.t0 = s.grid.t(k);
  out.grid.t1 = s.grid.t(k + window_len - 1);
  out.u = Tensor(out.grid.field_shape());
  const std::size_t plane = s.u.size() / s.grid.nt;
  std::copy(s.u.data() + k * plane, s.u.data() + (k + window_len) * plane, out.u.data());
  return out;
}

FieldSample galilean_boost(const FieldSample& s, double eps) {
  if (!supports_boost(s)) throw AugmentError("galilean_boost needs a periodic 1D KdV-Burgers-family sample");
  FieldSample out = s;
  if (eps == 0.0) return out;
  const double alpha = s.spec.coeff("alpha");
  const std::size_t nx = s.grid.nx;
  Tensor slice(Shape{nx});
  for (std::size_t n = 0; n < s.grid.nt; ++n) {
    std::copy(s.u.data() + n * nx, s.u.data() + (n + 1) * nx, slice.data());
    const Tensor moved = numkit::fourier_shift(slice, 0, alpha * eps * s.grid.t(n), s.grid.lx());
    for (std::size_t i = 0; i < nx; ++i) out.u.at(n, i) = moved[i] + eps;
  }
  return out;
}

FieldSample augment(const FieldSample& s, const AugmentConfig& cfg, numkit::Rng& rng) {
  if (cfg.probability < 0.0 || cfg.probability > 1.0) throw AugmentError("augment probability outside [0, 1]");
  const bool apply = numkit::uniform(rng, 0.0, 1.0) < cfg.probability;
  const bool time = cfg.groups.count(Group::TimeShift) > 0;
  if (time && cfg.window_len == 0) throw AugmentError("TimeShift needs window_len");
  if (!apply) return time ? time_shift(s, cfg.window_len, 0.0) : s;

  auto draw = [&](double eps_max) { return numkit::uniform(rng, -eps_max, eps_max); };
  FieldSample out = s;
  if (time) {
    const double eps_max = cfg.eps_time < 0.0 ? 10.0 * s.grid.dt() : cfg.eps_time;
    const double room = s.grid.dt() * static_cast<double>(s.grid.nt - cfg.window_len);
    out = time_shift(out, cfg.window_len, numkit::uniform(rng, 0.0, std::min(eps_max, room)));
  }
  if (cfg.groups.count(Group::SpaceShiftX)) {
    out = fourier_shift(out, draw(cfg.eps_space < 0.0 ? s.grid.lx() / 8.0 : cfg.eps_space), Axis::X);
  }
  if (cfg.groups.count(Group::SpaceShiftY)) {
    out = fourier_shift(out, draw(cfg.eps_space < 0.0 ? s.grid.ly() / 8.0 : cfg.eps_space), Axis::Y);
  }
  if (cfg.groups.count(Group::GalileanBoost)) out = galilean_boost(out, draw(cfg.eps_boost));
  return out;
}

}  // namespace maepde::liesym

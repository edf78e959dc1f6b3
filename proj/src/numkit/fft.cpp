#include "maepde/numkit/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

namespace maepde::numkit {
namespace {

enum class PlanKind { R2C, C2R, C2CForward, C2CBackward };

// Aligned scratch buffers, one set per thread, so that new-array execution
// of cached plans is safe from concurrent callers.
struct Scratch {
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_complex* cplx_out = nullptr;
  std::size_t capacity = 0;

  ~Scratch() { release(); }

  void release() {
    if (real) fftw_free(real);
    if (cplx) fftw_free(cplx);
    if (cplx_out) fftw_free(cplx_out);
    real = nullptr;
    cplx = cplx_out = nullptr;
    capacity = 0;
  }

  void reserve(std::size_t n) {
    if (n <= capacity) return;
    release();
    real = fftw_alloc_real(n);
    cplx = fftw_alloc_complex(n);
    cplx_out = fftw_alloc_complex(n);
    capacity = n;
  }
};

thread_local Scratch scratch;

std::mutex planner_mutex;

fftw_plan get_plan(PlanKind kind, std::size_t n) {
  static std::map<std::tuple<int, std::size_t>, fftw_plan> cache;
  std::lock_guard lock(planner_mutex);
  auto key = std::make_tuple(static_cast<int>(kind), n);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  // Planning with FFTW_ESTIMATE does not touch the arrays.
  double* r = fftw_alloc_real(n);
  fftw_complex* c = fftw_alloc_complex(n);
  fftw_complex* c2 = fftw_alloc_complex(n);
  const int ni = static_cast<int>(n);
  fftw_plan plan = nullptr;
  switch (kind) {
    case PlanKind::R2C: plan = fftw_plan_dft_r2c_1d(ni, r, c, FFTW_ESTIMATE); break;
    case PlanKind::C2R: plan = fftw_plan_dft_c2r_1d(ni, c, r, FFTW_ESTIMATE); break;
    case PlanKind::C2CForward: plan = fftw_plan_dft_1d(ni, c, c2, FFTW_FORWARD, FFTW_ESTIMATE); break;
    case PlanKind::C2CBackward: plan = fftw_plan_dft_1d(ni, c, c2, FFTW_BACKWARD, FFTW_ESTIMATE); break;
  }
  fftw_free(r);
  fftw_free(c);
  fftw_free(c2);
  if (!plan) throw NumkitError("FFTW failed to create a plan");
  cache.emplace(key, plan);
  return plan;
}

struct AxisLayout {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisLayout layout(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw NumkitError("fft axis out of range for shape " + shape_str(shape));
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

Spectrum rfft(const Tensor& x, std::size_t axis) {
  const auto l = layout(x.shape(), axis);
  if (l.n == 0) throw NumkitError("rfft over a zero-length axis");
  const std::size_t nh = l.n / 2 + 1;
  Shape out_shape = x.shape();
  out_shape[axis] = nh;
  Spectrum out(out_shape);
  scratch.reserve(l.n);
  fftw_plan plan = get_plan(PlanKind::R2C, l.n);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const double* src = x.data() + o * l.n * l.inner + i;
      for (std::size_t j = 0; j < l.n; ++j) scratch.real[j] = src[j * l.inner];
      fftw_execute_dft_r2c(plan, scratch.real, scratch.cplx);
      Complex* dst = out.values.data() + o * nh * l.inner + i;
      for (std::size_t j = 0; j < nh; ++j) dst[j * l.inner] = Complex(scratch.cplx[j][0], scratch.cplx[j][1]);
    }
  }
  return out;
}

Tensor irfft(const Spectrum& s, std::size_t axis, std::size_t n) {
  const auto l = layout(s.shape, axis);
  if (n == 0) throw NumkitError("irfft to a zero-length axis");
  const std::size_t nh = n / 2 + 1;
  if (l.n != nh) {
    throw NumkitError("irfft: spectrum extent " + std::to_string(l.n) + " does not match n=" + std::to_string(n));
  }
  Shape out_shape = s.shape;
  out_shape[axis] = n;
  Tensor out(out_shape);
  scratch.reserve(n);
  fftw_plan plan = get_plan(PlanKind::C2R, n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const Complex* src = s.values.data() + o * nh * l.inner + i;
      for (std::size_t j = 0; j < nh; ++j) {
        scratch.cplx[j][0] = src[j * l.inner].real();
        scratch.cplx[j][1] = src[j * l.inner].imag();
      }
      // c2r treats these as Hermitian; pin the ignored parts explicitly.
      scratch.cplx[0][1] = 0.0;
      if (n % 2 == 0) scratch.cplx[nh - 1][1] = 0.0;
      fftw_execute_dft_c2r(plan, scratch.cplx, scratch.real);
      double* dst = out.data() + o * n * l.inner + i;
      for (std::size_t j = 0; j < n; ++j) dst[j * l.inner] = scratch.real[j] * scale;
    }
  }
  return out;
}

void fft_inplace(Spectrum& s, std::size_t axis, bool inverse) {
  const auto l = layout(s.shape, axis);
  if (l.n == 0) throw NumkitError("fft over a zero-length axis");
  scratch.reserve(l.n);
  fftw_plan plan = get_plan(inverse ? PlanKind::C2CBackward : PlanKind::C2CForward, l.n);
  const double scale = inverse ? 1.0 / static_cast<double>(l.n) : 1.0;
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      Complex* line = s.values.data() + o * l.n * l.inner + i;
      for (std::size_t j = 0; j < l.n; ++j) {
        scratch.cplx[j][0] = line[j * l.inner].real();
        scratch.cplx[j][1] = line[j * l.inner].imag();
      }
      fftw_execute_dft(plan, scratch.cplx, scratch.cplx_out);
      for (std::size_t j = 0; j < l.n; ++j) {
        line[j * l.inner] = Complex(scratch.cplx_out[j][0] * scale, scratch.cplx_out[j][1] * scale);
      }
    }
  }
}

Spectrum rfft2(const Tensor& x) {
  if (x.rank() < 2) throw NumkitError("rfft2 needs rank >= 2, got " + shape_str(x.shape()));
  Spectrum s = rfft(x, x.rank() - 1);
  fft_inplace(s, x.rank() - 2, false);
  return s;
}

Tensor irfft2(const Spectrum& s, std::size_t n_last) {
  if (s.shape.size() < 2) throw NumkitError("irfft2 needs rank >= 2");
  Spectrum tmp = s;
  fft_inplace(tmp, s.shape.size() - 2, true);
  return irfft(tmp, s.shape.size() - 1, n_last);
}

std::vector<double> rfft_wavenumbers(std::size_t n, double length) {
  std::vector<double> k(n / 2 + 1);
  for (std::size_t m = 0; m < k.size(); ++m) k[m] = 2.0 * std::numbers::pi * static_cast<double>(m) / length;
  return k;
}

std::vector<double> fft_wavenumbers(std::size_t n, double length) {
  std::vector<double> k(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double mm = m <= n / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
    k[m] = 2.0 * std::numbers::pi * mm / length;
  }
  return k;
}


Tensor fourier_shift(const Tensor& x, std::size_t axis, double shift, double length) {
  const std::size_t n = x.dim(axis);
  Spectrum s = rfft(x, axis);
  const auto k = rfft_wavenumbers(n, length);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t nh = k.size();
  std::vector<Complex> phase(nh);
  for (std::size_t m = 0; m < nh; ++m) {
    const bool nyquist = n % 2 == 0 && m == nh - 1 && m > 0;
    phase[m] = nyquist ? Complex(std::cos(k[m] * shift), 0.0) : std::polar(1.0, -k[m] * shift);
  }
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t m = 0; m < nh; ++m)
      for (std::size_t i = 0; i < inner; ++i) s[(o * nh + m) * inner + i] *= phase[m];
  return irfft(s, axis, n);
}

}  // namespace maepde::numkit

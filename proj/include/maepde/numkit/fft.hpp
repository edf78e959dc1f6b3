#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "maepde/numkit/tensor.hpp"

namespace maepde::numkit {

using Complex = std::complex<double>;

/// Half-complex spectrum of a real tensor. Along the rfft axis the extent is
/// floor(n/2)+1; other axes keep their extent. Values are row-major.
struct Spectrum {
  Shape shape;
  std::vector<Complex> values;

  Spectrum() = default;
  explicit Spectrum(Shape s) : shape(std::move(s)), values(shape_size(shape)) {}

  Complex& operator[](std::size_t i) { return values[i]; }
  const Complex& operator[](std::size_t i) const { return values[i]; }
};

/// Unnormalized forward real FFT along `axis`.
Spectrum rfft(const Tensor& x, std::size_t axis);

/// Inverse of rfft (scaled by 1/n); `n` is the real length along `axis`.
/// Imaginary parts of the DC and Nyquist bins are ignored.
Tensor irfft(const Spectrum& s, std::size_t axis, std::size_t n);

/// In-place complex FFT along `axis`. The inverse is scaled by 1/n.
void fft_inplace(Spectrum& s, std::size_t axis, bool inverse);

/// rfft over the last axis followed by a complex FFT over the second-to-last.
Spectrum rfft2(const Tensor& x);
Tensor irfft2(const Spectrum& s, std::size_t n_last);

/// Angular wavenumbers 2*pi*m/length for the rfft bins m = 0..n/2.
std::vector<double> rfft_wavenumbers(std::size_t n, double length);

/// Angular wavenumbers in FFT order (0, 1, .., n/2, -(n/2-1), .., -1) * 2*pi/length.
std::vector<double> fft_wavenumbers(std::size_t n, double length);

}  // namespace maepde::numkit

namespace maepde::numkit {

/// Periodic translation u(x) -> u(x - shift) along `axis` of period `length`,
/// by phase rotation of each rfft bin. The Nyquist bin of an even-length
/// axis is scaled by cos(k shift), which shifts its real cosine interpolant.
Tensor fourier_shift(const Tensor& x, std::size_t axis, double shift, double length);

}  // namespace maepde::numkit

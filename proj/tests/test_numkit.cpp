#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <numbers>

#include "maepde/numkit/fft.hpp"
#include "maepde/numkit/gradcheck.hpp"
#include "maepde/numkit/nn.hpp"
#include "maepde/numkit/ops.hpp"
#include "maepde/numkit/optim.hpp"

using namespace maepde::numkit;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * normal(rng);
  return t;
}

// Contract a tensor-valued op against fixed random weights so every output
// entry feeds the scalar with a generic coefficient.
Var project(const Var& y, std::uint64_t seed) {
  return sum(mul(y, Var(random_tensor(y.shape(), seed))));
}

// O(n^2) DFT used as an independent reference.
std::vector<Complex> naive_dft(const std::vector<Complex>& x, int sign) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      out[k] += x[j] * std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n));
  return out;
}

}  // namespace

TEST(Fft, ConstantSignalIsDcOnly) {
  Spectrum s = rfft(Tensor::from({1, 1, 1, 1}), 0);
  ASSERT_EQ(s.values.size(), 3u);
  EXPECT_NEAR(std::abs(s[0] - Complex(4, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(s[1]), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(s[2]), 0.0, 1e-15);
}

TEST(Fft, ImpulseHasFlatSpectrum) {
  Spectrum s = rfft(Tensor::from({1, 0, 0, 0}), 0);
  for (const auto& c : s.values) EXPECT_NEAR(std::abs(c - Complex(1, 0)), 0.0, 1e-15);
}

TEST(Fft, RoundTripEvenAndOdd) {
  for (std::size_t n : {100u, 101u, 2u, 3u}) {
    Tensor x = random_tensor({n}, 7 + n);
    Tensor y = irfft(rfft(x, 0), 0, n);
    EXPECT_LT(max_abs_diff(x, y) / l2_norm(x.values()), 1e-12) << "n=" << n;
  }
}

TEST(Fft, MatchesNaiveDft) {
  Tensor x = random_tensor({3, 11}, 3);
  Spectrum s = rfft(x, 1);
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<Complex> line(11);
    for (std::size_t j = 0; j < 11; ++j) line[j] = x.at(r, j);
    auto ref = naive_dft(line, -1);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(std::abs(s[r * 6 + k] - ref[k]), 0.0, 1e-12);
  }
}

TEST(Fft, TwoDimensionalRoundTripAndAxis0) {
  Tensor x = random_tensor({2, 8, 10}, 11);
  EXPECT_LT(max_abs_diff(irfft2(rfft2(x), 10), x), 1e-13);
  Tensor y = random_tensor({6, 4}, 12);
  EXPECT_LT(max_abs_diff(irfft(rfft(y, 0), 0, 6), y), 1e-13);
}

TEST(Fft, Parseval) {
  for (std::size_t n : {64u, 65u}) {
    Tensor x = random_tensor({n}, 21 + n);
    Spectrum s = rfft(x, 0);
    double e = 0.0;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
      e += (single ? 1.0 : 2.0) * std::norm(s[k]);
    }
    e /= static_cast<double>(n);
    double direct = 0.0;
    for (double v : x.values()) direct += v * v;
    EXPECT_LT(std::abs(e - direct) / direct, 1e-10);
  }
}

TEST(Fft, ZeroLengthAxisThrows) {
  EXPECT_THROW(rfft(Tensor(Shape{0}), 0), NumkitError);
}

TEST(Fft, Wavenumbers) {
  auto k = fft_wavenumbers(4, 2.0 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(k[0], 0.0);
  EXPECT_DOUBLE_EQ(k[1], 1.0);
  EXPECT_DOUBLE_EQ(k[2], 2.0);
  EXPECT_DOUBLE_EQ(k[3], -1.0);
}

TEST(Tensor, NonFiniteKernelResultIsReported) {
  Var a(Tensor::from({1.0, 2.0}));
  EXPECT_THROW(scale(a, std::numeric_limits<double>::infinity()), NumkitError);
}

TEST(GradCheck, QuadraticIsExact) {
  const double err = grad_check([](const Var& x) { return sum(mul(x, x)); }, Tensor::from({1.0, 2.0}));
  EXPECT_LT(err, 1e-8);
  Var x(Tensor::from({1.0, 2.0}), true);
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(GradCheck, ConstantFunction) {
  auto f = [](const Var&) { return Var(Tensor::scalar(3.0)); };
  EXPECT_EQ(grad_check(f, Tensor::from({1.0, -1.0})), 0.0);
}

TEST(Attention, SingleTokenReturnsValue) {
  Tensor q = random_tensor({1, 8}, 1), k = random_tensor({1, 8}, 2), v = random_tensor({1, 8}, 3);
  Var out = attention(Var(q), Var(k), Var(v), 2);
  EXPECT_LT(max_abs_diff(out.value(), v), 1e-15);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Tensor q = random_tensor({3, 4}, 4), v = random_tensor({5, 4}, 5);
  Tensor k(Shape{5, 4});
  Tensor row = random_tensor({4}, 6);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) k.at(i, j) = row[j];
  Var out = attention(Var(q), Var(k), Var(v), 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double m = 0.0;
      for (std::size_t r = 0; r < 5; ++r) m += v.at(r, j) / 5.0;
      EXPECT_NEAR(out.value().at(i, j), m, 1e-14);
    }
}

TEST(Attention, MaskedKeysAreIgnored) {
  Tensor q = random_tensor({3, 4}, 7), k = random_tensor({5, 4}, 8), v = random_tensor({5, 4}, 9);
  Tensor k2(Shape{3, 4}), v2(Shape{3, 4});
  std::copy_n(k.data(), 12, k2.data());
  std::copy_n(v.data(), 12, v2.data());
  Var a = attention(Var(q), Var(k), Var(v), 2, {true, true, true, false, false});
  Var b = attention(Var(q), Var(k2), Var(v2), 2);
  EXPECT_LT(max_abs_diff(a.value(), b.value()), 1e-14);
}

TEST(Attention, DimensionErrors) {
  Tensor q = random_tensor({2, 6}, 1);
  EXPECT_THROW(attention(Var(q), Var(q), Var(q), 4), NumkitError);
  EXPECT_THROW(attention(Var(q), Var(random_tensor({2, 5}, 2)), Var(q), 2), NumkitError);
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  Tensor k = random_tensor({3, 4}, 11), v = random_tensor({3, 4}, 12), q = random_tensor({3, 4}, 13);
  EXPECT_LT(grad_check([&](const Var& x) { return project(attention(x, Var(k), Var(v), 2), 99); }, q), 1e-5);
  EXPECT_LT(grad_check([&](const Var& x) { return project(attention(Var(q), x, Var(v), 2), 99); }, k), 1e-5);
  EXPECT_LT(grad_check([&](const Var& x) { return project(attention(Var(q), Var(k), x, 2), 99); }, v), 1e-5);
  EXPECT_LT(grad_check([&](const Var& x) { return project(attention(x, x, x, 2, {true, false, true}), 98); }, q), 1e-5);
}

TEST(LayerNorm, ConstantRowGivesBeta) {
  Tensor x(Shape{2, 5}, 3.0);
  Tensor gamma = random_tensor({5}, 1), beta = random_tensor({5}, 2);
  Var y = layer_norm(Var(x), Var(gamma), Var(beta));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(y.value().at(r, c), beta[c], 1e-12);
}

TEST(LayerNorm, UnitAffineStandardizesRows) {
  Tensor x = random_tensor({4, 16}, 3, 5.0);
  Var y = layer_norm(Var(x), Var(Tensor(Shape{16}, 1.0)), Var(Tensor(Shape{16})));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 16; ++c) m += y.value().at(r, c) / 16.0;
    for (std::size_t c = 0; c < 16; ++c) v += (y.value().at(r, c) - m) * (y.value().at(r, c) - m) / 16.0;
    EXPECT_LT(std::abs(m), 1e-10);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Tensor x = random_tensor({3, 6}, 5), g = random_tensor({6}, 6), b = random_tensor({6}, 7);
  EXPECT_LT(grad_check([&](const Var& v) { return project(layer_norm(v, Var(g), Var(b)), 1); }, x), 1e-5);
  EXPECT_LT(grad_check([&](const Var& v) { return project(layer_norm(Var(x), v, Var(b)), 1); }, g), 1e-5);
  EXPECT_LT(grad_check([&](const Var& v) { return project(layer_norm(Var(x), Var(g), v), 1); }, b), 1e-5);
}

TEST(Kernels, ElementwiseAndMatrixGradients) {
  Tensor a = random_tensor({3, 4}, 1), b = random_tensor({4, 5}, 2), c = random_tensor({3, 4}, 3);
  Tensor row = random_tensor({4}, 4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(matmul(x, Var(b)), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(matmul(Var(a), x), 5); }, b), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(gelu(x), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(softmax_rows(x), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(mul(x, Var(c)), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(sub(Var(c), x), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(add_rowvec(Var(a), x), 5); }, row), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(mul_rowvec(x, Var(row)), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(mul_rowvec(Var(a), x), 5); }, row), 1e-4);
  Tensor w = random_tensor({4, 2}, 6), bias = random_tensor({2}, 7);
  EXPECT_LT(grad_check([&](const Var& x) { return project(linear(x, Var(w), Var(bias)), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(linear(Var(a), x, Var(bias)), 5); }, w), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(linear(Var(a), Var(w), x), 5); }, bias), 1e-4);
}

TEST(Kernels, TokenPlumbingGradients) {
  Tensor a = random_tensor({3, 4}, 1), b = random_tensor({2, 4}, 2), row = random_tensor({1, 4}, 3);
  EXPECT_LT(grad_check([&](const Var& x) { return project(concat_rows({Var(b), x, x}), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(gather_rows(x, {2, 0, 2}), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(repeat_rows(x, 3), 5); }, row), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return project(mean_rows(x), 5); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return mean(mul(x, x)); }, a), 1e-4);
}

TEST(Kernels, LossGradients) {
  Tensor a = random_tensor({3, 4}, 1), t = random_tensor({3, 4}, 2);
  Tensor w(Shape{3, 4}, 0.0);
  w[1] = w[5] = w[11] = 1.0;
  EXPECT_LT(grad_check([&](const Var& x) { return mse(x, Var(t)); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return mse(x, Var(t), &w); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Var& x) { return cross_entropy(x, 2); }, random_tensor({5}, 3)), 1e-4);
}

TEST(Kernels, MseMatchesBruteForce) {
  Tensor a = random_tensor({7, 3}, 1), t = random_tensor({7, 3}, 2);
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += (a[i] - t[i]) * (a[i] - t[i]);
  ref /= static_cast<double>(a.size());
  EXPECT_NEAR(mse(Var(a), Var(t)).value().item(), ref, 1e-12);
}

TEST(Kernels, UniformLogitsCrossEntropyIsLogClasses) {
  EXPECT_NEAR(cross_entropy(Var(Tensor(Shape{4}, 0.3)), 1).value().item(), std::log(4.0), 1e-14);
}

namespace {

// Direct-loop "same" convolution.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  Tensor out(Shape{cout, h, wd});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < wd; ++xx) {
        double acc = b[o];
        for (std::size_t i = 0; i < cin; ++i)
          for (std::size_t di = 0; di < kh; ++di)
            for (std::size_t dj = 0; dj < kw; ++dj) {
              const long sy = static_cast<long>(y + di) - static_cast<long>(kh / 2);
              const long sx = static_cast<long>(xx + dj) - static_cast<long>(kw / 2);
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) continue;
              acc += w[((o * cin + i) * kh + di) * kw + dj] * x.at(i, sy, sx);
            }
        out.at(o, y, xx) = acc;
      }
  return out;
}

}  // namespace

TEST(Conv, MatchesDirectLoop) {
  Tensor x = random_tensor({2, 5, 6}, 1), w = random_tensor({3, 2, 3, 3}, 2), b = random_tensor({3}, 3);
  EXPECT_LT(max_abs_diff(conv2d(Var(x), Var(w), Var(b)).value(), conv_oracle(x, w, b)), 1e-13);
  Tensor w1 = random_tensor({3, 2, 1, 1}, 4);
  EXPECT_LT(max_abs_diff(conv2d(Var(x), Var(w1), Var(b)).value(), conv_oracle(x, w1, b)), 1e-13);
  Tensor x1 = random_tensor({2, 1, 9}, 5), w13 = random_tensor({3, 2, 1, 3}, 6);
  EXPECT_LT(max_abs_diff(conv2d(Var(x1), Var(w13), Var(b)).value(), conv_oracle(x1, w13, b)), 1e-13);
}

TEST(Conv, Gradients) {
  Tensor x = random_tensor({2, 4, 5}, 1), w = random_tensor({3, 2, 3, 3}, 2), b = random_tensor({3}, 3);
  EXPECT_LT(grad_check([&](const Var& v) { return project(conv2d(v, Var(w), Var(b)), 7); }, x), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(conv2d(Var(x), v, Var(b)), 7); }, w), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(conv2d(Var(x), Var(w), v), 7); }, b), 1e-4);
  Tensor w1 = random_tensor({3, 2, 1, 1}, 4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(conv2d(v, Var(w1), Var(b)), 7); }, x), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(conv2d(Var(x), v, Var(b)), 7); }, w1), 1e-4);
}

TEST(GroupNorm, StandardizesAndDifferentiates) {
  Tensor x = random_tensor({4, 3, 3}, 1, 2.0);
  Var y = group_norm(Var(x), 2);
  for (std::size_t g = 0; g < 2; ++g) {
    double m = 0.0;
    for (std::size_t i = 0; i < 18; ++i) m += y.value()[g * 18 + i] / 18.0;
    EXPECT_LT(std::abs(m), 1e-12);
  }
  EXPECT_LT(grad_check([&](const Var& v) { return project(group_norm(v, 2), 3); }, x), 1e-4);
  Tensor s = random_tensor({4}, 5), sh = random_tensor({4}, 6);
  EXPECT_LT(grad_check([&](const Var& v) { return project(channel_affine(Var(x), v, Var(sh)), 3); }, s), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(channel_affine(Var(x), Var(s), v), 3); }, sh), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(channel_affine(v, Var(s), Var(sh)), 3); }, x), 1e-4);
}

TEST(ImageOps, PoolUpsampleConcatGradients) {
  Tensor x = random_tensor({2, 4, 6}, 1);
  EXPECT_LT(grad_check([&](const Var& v) { return project(avg_pool(v, 2, 3), 3); }, x), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(upsample_nearest(v, 2, 1), 3); }, x), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(concat_channels({v, Var(x)}), 3); }, x), 1e-4);
  Var p = avg_pool(Var(x), 2, 2);
  EXPECT_NEAR(p.value().at(1, 1, 2), (x.at(1, 2, 4) + x.at(1, 2, 5) + x.at(1, 3, 4) + x.at(1, 3, 5)) / 4.0, 1e-15);
  EXPECT_THROW(avg_pool(Var(x), 3, 1), NumkitError);
}

namespace {

// Fourier layer evaluated with naive DFTs along both axes.
Tensor spectral_oracle(const Tensor& x, const Tensor& wr, const Tensor& wi) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2), cout = wr.dim(2), mh = wr.dim(3), mw = wr.dim(4);
  const std::size_t blocks = wr.dim(0);
  Tensor out(Shape{cout, h, w});
  auto mode = [&](std::size_t i, long ky, long kx) {
    Complex acc{};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        acc += x.at(i, y, xx) * std::polar(1.0, -2.0 * std::numbers::pi *
                                                    (static_cast<double>(ky * static_cast<long>(y)) / h +
                                                     static_cast<double>(kx * static_cast<long>(xx)) / w));
    return acc;
  };
  // Full (non-Hermitian-reduced) spectrum of the output.
  std::vector<Complex> full(cout * h * w);
  const std::size_t emh = h == 1 ? 1 : std::min(mh, h / 2);
  const std::size_t emw = std::min(mw, w / 2 + 1);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t r = 0; r < emh; ++r) {
      const std::size_t row = b == 0 ? r : h - emh + r;
      for (std::size_t m = 0; m < emw; ++m)
        for (std::size_t o = 0; o < cout; ++o) {
          Complex acc{};
          for (std::size_t i = 0; i < cin; ++i) {
            const std::size_t k = (((b * cin + i) * cout + o) * mh + r) * mw + m;
            acc += Complex(wr[k], wi[k]) * mode(i, static_cast<long>(row), static_cast<long>(m));
          }
          full[(o * h + row) * w + m] = acc;
        }
    }
  // Real inverse: bins 1..ceil(w/2)-1 stand for themselves and their mirror;
  // DC and Nyquist contribute only their real part.
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < h; ++ky)
          for (std::size_t kx = 0; kx <= w / 2; ++kx) {
            const Complex c = full[(o * h + ky) * w + kx];
            const double ph = 2.0 * std::numbers::pi *
                              (static_cast<double>(ky * y) / h + static_cast<double>(kx * xx) / w);
            const bool single = kx == 0 || (w % 2 == 0 && kx == w / 2);
            if (single) {
              // Matches irfft, which keeps only the Hermitian part along the last axis.
              const std::size_t ky2 = (h - ky) % h;
              const Complex mirror = std::conj(full[(o * h + ky2) * w + kx]);
              acc += std::real(0.5 * (c + mirror) * std::polar(1.0, ph));
            } else {
              acc += 2.0 * std::real(c * std::polar(1.0, ph));
            }
          }
        out.at(o, y, xx) = acc / static_cast<double>(h * w);
      }
  return out;
}

}  // namespace

TEST(SpectralConv, MatchesNaiveDft1d) {
  Tensor x = random_tensor({2, 1, 12}, 1), wr = random_tensor({1, 2, 3, 1, 5}, 2), wi = random_tensor({1, 2, 3, 1, 5}, 3);
  EXPECT_LT(max_abs_diff(spectral_conv(Var(x), Var(wr), Var(wi)).value(), spectral_oracle(x, wr, wi)), 1e-12);
  // More modes than the signal resolves: extra weights are ignored.
  Tensor x2 = random_tensor({2, 1, 6}, 4);
  EXPECT_LT(max_abs_diff(spectral_conv(Var(x2), Var(wr), Var(wi)).value(), spectral_oracle(x2, wr, wi)), 1e-12);
}

TEST(SpectralConv, MatchesNaiveDft2d) {
  Tensor x = random_tensor({2, 8, 6}, 1), wr = random_tensor({2, 2, 2, 3, 4}, 2), wi = random_tensor({2, 2, 2, 3, 4}, 3);
  EXPECT_LT(max_abs_diff(spectral_conv(Var(x), Var(wr), Var(wi)).value(), spectral_oracle(x, wr, wi)), 1e-12);
}

TEST(SpectralConv, Gradients) {
  Tensor x = random_tensor({2, 1, 10}, 1), wr = random_tensor({1, 2, 3, 1, 6}, 2), wi = random_tensor({1, 2, 3, 1, 6}, 3);
  EXPECT_LT(grad_check([&](const Var& v) { return project(spectral_conv(v, Var(wr), Var(wi)), 4); }, x), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(spectral_conv(Var(x), v, Var(wi)), 4); }, wr), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(spectral_conv(Var(x), Var(wr), v), 4); }, wi), 1e-4);
  Tensor x2 = random_tensor({2, 6, 7}, 5), wr2 = random_tensor({2, 2, 2, 2, 3}, 6), wi2 = random_tensor({2, 2, 2, 2, 3}, 7);
  EXPECT_LT(grad_check([&](const Var& v) { return project(spectral_conv(v, Var(wr2), Var(wi2)), 4); }, x2), 1e-4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(spectral_conv(Var(x2), v, Var(wi2)), 4); }, wr2), 1e-4);
}

TEST(Resample, AppliesMatricesAndDifferentiates) {
  Tensor x = random_tensor({2, 3, 4}, 1), mh = random_tensor({5, 3}, 2), mw = random_tensor({2, 4}, 3);
  Var y = resample(Var(x), mh, mw);
  double ref = 0.0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 4; ++b) ref += mh.at(4, a) * x.at(1, a, b) * mw.at(1, b);
  EXPECT_NEAR(y.value().at(1, 4, 1), ref, 1e-13);
  EXPECT_LT(grad_check([&](const Var& v) { return project(resample(v, mh, mw), 2); }, x), 1e-4);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Var x(Tensor::from({1.0, 2.0}), true);
  {
    NoGradGuard g;
    EXPECT_FALSE(mul(x, x).requires_grad());
  }
  EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(Autograd, SharedSubgraphAccumulates) {
  Var x(Tensor::from({3.0}), true);
  Var y = mul(x, x);
  add(y, y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autograd, ParameterGradsAccumulateAcrossPasses) {
  Parameter p(Tensor::from({2.0}));
  sum(mul(p.var(), p.var())).backward();
  sum(mul(p.var(), p.var())).backward();
  EXPECT_DOUBLE_EQ(p.grad()[0], 8.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad()[0], 0.0);
}

TEST(AdamW, ZeroGradientNoDecayLeavesParams) {
  Parameter p(Tensor::from({1.5, -2.0}));
  p.zero_grad();
  AdamWState st;
  adamw_step({&p}, st, 1e-2, {});
  EXPECT_EQ(p.value(), Tensor::from({1.5, -2.0}));
}

TEST(AdamW, DecoupledDecay) {
  Parameter p(Tensor::from({1.5, -2.0}));
  p.zero_grad();
  AdamWState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  adamw_step({&p}, st, 0.01, cfg);
  EXPECT_DOUBLE_EQ(p.value()[0], 1.5 * (1.0 - 0.001));
  EXPECT_DOUBLE_EQ(p.value()[1], -2.0 * (1.0 - 0.001));
}

TEST(AdamW, FirstStepClosedForm) {
  Parameter p(Tensor::from({0.7}));
  p.grad()[0] = 1.0;
  AdamWState st;
  AdamWConfig cfg;
  adamw_step({&p}, st, 0.05, cfg);
  // mhat = g and vhat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.value()[0], 0.7 - 0.05 / (1.0 + 1e-8), 1e-15);
}

TEST(AdamW, NonFiniteGradientAborts) {
  Parameter p(Tensor::from({0.7}));
  p.grad()[0] = std::nan("");
  AdamWState st;
  EXPECT_THROW(adamw_step({&p}, st, 0.05, {}), NumkitError);
  EXPECT_EQ(p.value()[0], 0.7);
}

TEST(AdamW, BitIdenticalRepeats) {
  auto run = [] {
    Rng rng(5);
    Linear lin(3, 2, rng);
    AdamW opt(lin.parameters(), {});
    Tensor x = random_tensor({4, 3}, 6);
    for (int i = 0; i < 5; ++i) {
      opt.zero_grad();
      mean(mul(lin(Var(x)), lin(Var(x)))).backward();
      opt.step(1e-2);
    }
    return lin.weight.value();
  };
  EXPECT_EQ(run(), run());
}

TEST(OneCycle, Shape) {
  const std::size_t total = 100;
  EXPECT_DOUBLE_EQ(one_cycle_lr(30, total, 1e-3), 1e-3);
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, total, 1e-3), 1e-3 / 25.0);
  EXPECT_LT(one_cycle_lr(total, total, 1e-3), one_cycle_lr(0, total, 1e-3));
  EXPECT_NEAR(one_cycle_lr(total, total, 1e-3), 1e-3 / 25.0 / 1e4, 1e-18);
  for (std::size_t s = 1; s <= 30; ++s) EXPECT_GT(one_cycle_lr(s, total, 1.0), one_cycle_lr(s - 1, total, 1.0));
  for (std::size_t s = 31; s <= total; ++s) EXPECT_LT(one_cycle_lr(s, total, 1.0), one_cycle_lr(s - 1, total, 1.0));
  EXPECT_THROW(one_cycle_lr(101, total, 1.0), NumkitError);
}

TEST(Modules, TransformerBlockGradients) {
  Rng rng(3);
  TransformerBlock blk(8, 2, 2, rng);
  Tensor x = random_tensor({3, 8}, 4);
  EXPECT_LT(grad_check([&](const Var& v) { return project(blk(v), 5); }, x), 1e-4);
  // The key bias shifts every score in a row equally, so its exact gradient
  // is zero and the relative measure would only see finite-difference noise.
  std::vector<Parameter*> params;
  for (auto& np : blk.named_parameters())
    if (np.name != "attn.k.bias") params.push_back(np.param);
  EXPECT_LT(grad_check_params([&] { return project(blk(Var(x)), 5); }, params), 1e-4);
  EXPECT_EQ(blk.named_parameters().front().name, "ln1.gamma");
}

TEST(Kernels, SuiteRuntime) {
  const auto t0 = std::chrono::steady_clock::now();
  Tensor x = random_tensor({2, 16, 16}, 1), w = random_tensor({4, 2, 3, 3}, 2), b = random_tensor({4}, 3);
  double err = grad_check([&](const Var& v) { return project(conv2d(v, Var(w), Var(b)), 4); }, x);
  EXPECT_LT(err, 1e-4);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
}

TEST(Fft, FourierShiftMatchesClosedForm) {
  const double L = 16.0;
  Tensor x(Shape{2, 32});
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 32; ++i) x.at(r, i) = std::sin(2.0 * std::numbers::pi * (r + 1) * (i * L / 32) / L);
  Tensor y = fourier_shift(x, 1, 0.37, L);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 32; ++i)
      EXPECT_NEAR(y.at(r, i), std::sin(2.0 * std::numbers::pi * (r + 1) * (i * L / 32 - 0.37) / L), 1e-13);
}

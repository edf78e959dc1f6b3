#pragma once

#include <cstddef>
#include <vector>

#include "maepde/numkit/autograd.hpp"

namespace maepde::numkit {

// Elementwise (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var gelu(const Var& x);
Var detach(const Var& x);
Var reshape(const Var& x, Shape shape);

// Row-vector broadcasts over a (rows, cols) matrix.
Var add_rowvec(const Var& x, const Var& v);
Var mul_rowvec(const Var& x, const Var& v);

/// (M,K) x (K,N).
Var matmul(const Var& a, const Var& b);

/// x (rows, in) * w (in, out) + bias (out). Pass an undefined Var to skip the bias.
Var linear(const Var& x, const Var& w, const Var& bias);

Var softmax_rows(const Var& x);

/// Row-wise normalization over the last axis of a (rows, cols) matrix,
/// followed by the affine map gamma * xhat + beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Multi-head scaled dot-product attention. q is (Tq, D); k and v are (Tk, D).
/// `key_valid`, when non-empty, excludes keys whose flag is false.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t n_heads,
              const std::vector<bool>& key_valid = {});

// Token-sequence plumbing on (rows, cols) matrices.
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(const Var& x, const std::vector<std::size_t>& rows);
Var repeat_rows(const Var& row, std::size_t n);
Var mean_rows(const Var& x);

// Reductions to a single element.
Var sum(const Var& x);
Var mean(const Var& x);

/// Mean squared error. With `weights` (same shape), sum(w * d^2) / sum(w).
Var mse(const Var& pred, const Var& target, const Tensor* weights = nullptr);

/// Softmax cross-entropy of a single logit vector against class `label`.
Var cross_entropy(const Var& logits, std::size_t label);

// Channel-first image ops. x is (C, H, W); 1D signals use H = 1.

/// Zero-padded "same" convolution, stride 1. w is (Cout, Cin, kh, kw) with odd
/// kernel extents, bias is (Cout) or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias);

/// Group normalization without affine parameters.
Var group_norm(const Var& x, std::size_t groups, double eps = 1e-5);

/// x * scale[c] + shift[c]; either side may be undefined.
Var channel_affine(const Var& x, const Var& scale, const Var& shift);

Var concat_channels(const std::vector<Var>& parts);
Var avg_pool(const Var& x, std::size_t fh, std::size_t fw);
Var upsample_nearest(const Var& x, std::size_t fh, std::size_t fw);

/// Fourier-layer convolution. Weights are (blocks, Cin, Cout, mh, mw) real and
/// imaginary parts. With H = 1 there is one block of mh = 1; in 2D the two
/// blocks act on frequency rows [0, mh) and [H - mh, H). Modes beyond the
/// input's resolvable range are dropped.
Var spectral_conv(const Var& x, const Var& w_re, const Var& w_im);

/// Per-channel linear resampling y_c = mh * x_c * mw^T with constant matrices
/// mh (H', H) and mw (W', W).
Var resample(const Var& x, const Tensor& mh, const Tensor& mw);

}  // namespace maepde::numkit

#pragma once

#include <vector>

#include <Eigen/Core>

#include "abpn/autograd.hpp"

namespace abpn::ops {

// Differentiable primitives. Every op takes the tape it records onto; when the
// tape is not recording (or no input requires a gradient) the op is a plain
// function of its inputs.

/// Zero-padded cross-correlation. weight: Cout×Cin×k×k, bias: 1×Cout×1×1 or null.
/// Output extent per axis is floor((H + 2·pad − k)/stride) + 1.
template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int stride, int pad);

/// Transposed convolution, the adjoint of conv2d for the same geometry.
/// weight: Cin×Cout×k×k. Output extent per axis is (H − 1)·stride − 2·pad + k.
template <class T>
Var<T> deconv2d(Tape<T>& tape, const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
                int stride, int pad);

/// Batched product over the N and C axes: (R×K)·(K×S) per plane.
template <class T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

/// Swaps the last two axes.
template <class T>
Var<T> transpose(Tape<T>& tape, const Var<T>& a);

template <class T>
Var<T> reshape(Tape<T>& tape, const Var<T>& a, Shape shape);

/// Softmax along the last axis, stabilised by subtracting the row max.
template <class T>
Var<T> softmax_rows(Tape<T>& tape, const Var<T>& m);

/// y = x for x ≥ 0, slope[c]·x otherwise. slope: 1×C×1×1.
template <class T>
Var<T> prelu(Tape<T>& tape, const Var<T>& x, const Var<T>& slope);

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, T factor);

template <class T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts);

/// Scalar (1×1×1×1) reductions.
template <class T>
Var<T> sum(Tape<T>& tape, const Var<T>& a);
template <class T>
Var<T> mean(Tape<T>& tape, const Var<T>& a);

/// mean(|a − b|^order), order ∈ {1, 2}. The L1 subgradient is 0 at ties.
template <class T>
Var<T> lp_loss(Tape<T>& tape, const Var<T>& a, const Var<T>& b, int order);

template <class T>
Var<T> l1_loss(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return lp_loss(tape, a, b, 1);
}

/// Separable linear resampling of every plane: y = rows · x · colsᵀ, with
/// rows: Hout×Hin and cols: Wout×Win.
template <class T>
Var<T> resample(Tape<T>& tape, const Var<T>& x, const Eigen::MatrixXd& rows,
                const Eigen::MatrixXd& cols);

/// Output extents used by conv2d / deconv2d.
std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int pad);
std::int64_t deconv_out_extent(std::int64_t in, int kernel, int stride, int pad);

}  // namespace abpn::ops

#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "subseg/tape.hpp"
#include "subseg/tensor.hpp"

namespace subseg::ops {

// Differentiable op set. Every function computes the forward value and, when
// a tape is supplied and any input requires gradients, records a backward
// closure on it. Passing tape == nullptr gives a pure (inference) evaluation.
//
// Shapes follow the time-major convention used throughout: sequences are
// T x C row-major matrices.

// Dilated 1-d convolution along time with symmetric zero padding, so the
// output length equals the input length.
//   input  T x Cin, kernel Cout x Cin x k (k odd), bias Cout
TensorPtr conv1d_dilated(ComputeTape* tape, const TensorPtr& input, const TensorPtr& kernel,
                         const TensorPtr& bias, std::size_t dilation);

// Per-time-step affine map: out = x . W^T + b.  x: T x Cin, w: Cout x Cin,
// b: Cout or nullptr.
TensorPtr linear(ComputeTape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

TensorPtr relu(ComputeTape* tape, const TensorPtr& x);
TensorPtr sigmoid(ComputeTape* tape, const TensorPtr& x);

// Natural log with the inputs clamped below at kLogClamp; the gradient is
// cut to zero inside the clamped region.
TensorPtr log_clamped(ComputeTape* tape, const TensorPtr& x);
inline constexpr double kLogClamp = 1e-12;

TensorPtr abs_value(ComputeTape* tape, const TensorPtr& x);

// Binary elementwise ops. Operands must match exactly, except that either
// side may be a 1-element tensor, which broadcasts.
TensorPtr add(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr scale(ComputeTape* tape, const TensorPtr& x, double factor);

// min(x, cap) elementwise; gradient flows only where x < cap (treated as
// truncated at exactly x == cap).
TensorPtr min_scalar(ComputeTape* tape, const TensorPtr& x, double cap);

// Row-wise softmax with per-row max subtraction. x: T x C.
TensorPtr softmax_rows(ComputeTape* tape, const TensorPtr& x);

// [a ; b] along columns: T x Ca and T x Cb -> T x (Ca + Cb).
TensorPtr concat_cols(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b);

// Rows [start, start+count) of x.
TensorPtr slice_rows(ComputeTape* tape, const TensorPtr& x, std::size_t start, std::size_t count);

// T x C -> T x 1 sum over columns.
TensorPtr row_sum(ComputeTape* tape, const TensorPtr& x);

// out[t, 0] = x[t, idx[t]].
TensorPtr pick_per_row(ComputeTape* tape, const TensorPtr& x, const std::vector<std::size_t>& idx);

// Sum of all entries -> scalar.
TensorPtr sum_all(ComputeTape* tape, const TensorPtr& x);

// Inverted dropout: identity when not training, otherwise keeps entries with
// probability 1-p and rescales by 1/(1-p). The mask is drawn from rng.
TensorPtr dropout(ComputeTape* tape, const TensorPtr& x, double p, std::mt19937_64& rng,
                  bool training);

}  // namespace subseg::ops

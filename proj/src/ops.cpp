#include "subseg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "subseg/errors.hpp"

namespace subseg::ops {

namespace {

// Marks the output differentiable and defers the backward closure to the
// tape when recording is active.
template <typename Fn>
void finish(ComputeTape* tape, std::vector<TensorPtr> inputs, const TensorPtr& out, Fn&& fn) {
  bool needs = false;
  for (const auto& in : inputs)
    if (in->requires_grad) needs = true;
  if (!tape || !needs) return;
  out->set_requires_grad(true);
  tape->record(std::move(inputs), out, std::forward<Fn>(fn));
}

void require_matrix(const TensorPtr& x, const char* who) {
  if (!x || x->rank() != 2) throw dimension_error(std::string(who) + ": expected a 2-d tensor");
}

}  // namespace

TensorPtr conv1d_dilated(ComputeTape* tape, const TensorPtr& input, const TensorPtr& kernel,
                         const TensorPtr& bias, std::size_t dilation) {
  require_matrix(input, "conv1d_dilated");
  if (!kernel || kernel->rank() != 3)
    throw dimension_error("conv1d_dilated: kernel must be Cout x Cin x k");
  if (dilation < 1) throw parameter_error("conv1d_dilated: dilation must be >= 1");

  const std::size_t t_len = input->shape[0];
  const std::size_t cin = input->shape[1];
  const std::size_t cout = kernel->shape[0];
  const std::size_t k = kernel->shape[2];
  if (kernel->shape[1] != cin)
    throw dimension_error("conv1d_dilated: kernel input channels mismatch");
  if (k % 2 == 0) throw parameter_error("conv1d_dilated: kernel width must be odd");
  if (!bias || bias->numel() != cout)
    throw dimension_error("conv1d_dilated: bias length mismatch");

  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t d = static_cast<std::ptrdiff_t>(dilation);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t_len);

  auto out = Tensor::zeros({t_len, cout});
  for (std::size_t co = 0; co < cout; ++co) {
    const double* kbase = kernel->values.data() + co * cin * k;
    for (std::ptrdiff_t t = 0; t < n; ++t) {
      double acc = bias->values[co];
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j) {
        const std::ptrdiff_t src = t + (j - half) * d;
        if (src < 0 || src >= n) continue;
        const double* xrow = input->values.data() + src * cin;
        const double* kcol = kbase + j;  // stride k over ci
        for (std::size_t ci = 0; ci < cin; ++ci) acc += kcol[ci * k] * xrow[ci];
      }
      out->values[t * cout + co] = acc;
    }
  }

  finish(tape, {input, kernel, bias}, out, [input, kernel, bias, out, dilation]() {
    const std::size_t t_len = input->shape[0];
    const std::size_t cin = input->shape[1];
    const std::size_t cout = kernel->shape[0];
    const std::size_t k = kernel->shape[2];
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    const std::ptrdiff_t d = static_cast<std::ptrdiff_t>(dilation);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t_len);
    const std::vector<double>& go = out->grad;

    if (input->requires_grad) {
      for (std::ptrdiff_t t = 0; t < n; ++t) {
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j) {
          const std::ptrdiff_t src = t + (j - half) * d;
          if (src < 0 || src >= n) continue;
          double* gx = input->grad.data() + src * cin;
          for (std::size_t co = 0; co < cout; ++co) {
            const double g = go[t * cout + co];
            if (g == 0.0) continue;
            const double* kcol = kernel->values.data() + co * cin * k + j;
            for (std::size_t ci = 0; ci < cin; ++ci) gx[ci] += kcol[ci * k] * g;
          }
        }
      }
    }
    if (kernel->requires_grad) {
      for (std::size_t co = 0; co < cout; ++co) {
        double* gk = kernel->grad.data() + co * cin * k;
        for (std::ptrdiff_t t = 0; t < n; ++t) {
          const double g = go[t * cout + co];
          if (g == 0.0) continue;
          for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j) {
            const std::ptrdiff_t src = t + (j - half) * d;
            if (src < 0 || src >= n) continue;
            const double* xrow = input->values.data() + src * cin;
            for (std::size_t ci = 0; ci < cin; ++ci) gk[ci * k + j] += g * xrow[ci];
          }
        }
      }
    }
    if (bias->requires_grad) {
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) acc += go[t * cout + co];
        bias->grad[co] += acc;
      }
    }
  });
  return out;
}

TensorPtr linear(ComputeTape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t t_len = x->shape[0];
  const std::size_t cin = x->shape[1];
  const std::size_t cout = w->shape[0];
  if (w->shape[1] != cin) throw dimension_error("linear: weight input width mismatch");
  if (b && b->numel() != cout) throw dimension_error("linear: bias length mismatch");

  auto out = Tensor::zeros({t_len, cout});
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* xrow = x->values.data() + t * cin;
    double* orow = out->values.data() + t * cout;
    for (std::size_t o = 0; o < cout; ++o) {
      const double* wrow = w->values.data() + o * cin;
      double acc = b ? b->values[o] : 0.0;
      for (std::size_t i = 0; i < cin; ++i) acc += wrow[i] * xrow[i];
      orow[o] = acc;
    }
  }

  std::vector<TensorPtr> inputs = b ? std::vector<TensorPtr>{x, w, b} : std::vector<TensorPtr>{x, w};
  finish(tape, std::move(inputs), out, [x, w, b, out]() {
    const std::size_t t_len = x->shape[0];
    const std::size_t cin = x->shape[1];
    const std::size_t cout = w->shape[0];
    const std::vector<double>& go = out->grad;
    if (x->requires_grad) {
      for (std::size_t t = 0; t < t_len; ++t) {
        double* gx = x->grad.data() + t * cin;
        const double* grow = go.data() + t * cout;
        for (std::size_t o = 0; o < cout; ++o) {
          const double g = grow[o];
          if (g == 0.0) continue;
          const double* wrow = w->values.data() + o * cin;
          for (std::size_t i = 0; i < cin; ++i) gx[i] += g * wrow[i];
        }
      }
    }
    if (w->requires_grad) {
      for (std::size_t t = 0; t < t_len; ++t) {
        const double* xrow = x->values.data() + t * cin;
        const double* grow = go.data() + t * cout;
        for (std::size_t o = 0; o < cout; ++o) {
          const double g = grow[o];
          if (g == 0.0) continue;
          double* gw = w->grad.data() + o * cin;
          for (std::size_t i = 0; i < cin; ++i) gw[i] += g * xrow[i];
        }
      }
    }
    if (b && b->requires_grad) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) acc += go[t * cout + o];
        b->grad[o] += acc;
      }
    }
  });
  return out;
}

namespace {

template <typename FwdFn, typename GradFn>
TensorPtr unary_pointwise(ComputeTape* tape, const TensorPtr& x, FwdFn fwd, GradFn dfn) {
  if (!x) throw dimension_error("pointwise op: null operand");
  auto out = Tensor::zeros(x->shape);
  for (std::size_t i = 0; i < x->numel(); ++i) out->values[i] = fwd(x->values[i]);
  finish(tape, {x}, out, [x, out, dfn]() {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < x->numel(); ++i)
      x->grad[i] += dfn(x->values[i], out->values[i]) * out->grad[i];
  });
  return out;
}

}  // namespace

TensorPtr relu(ComputeTape* tape, const TensorPtr& x) {
  return unary_pointwise(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

TensorPtr sigmoid(ComputeTape* tape, const TensorPtr& x) {
  return unary_pointwise(
      tape, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double s) { return s * (1.0 - s); });
}

TensorPtr log_clamped(ComputeTape* tape, const TensorPtr& x) {
  return unary_pointwise(
      tape, x, [](double v) { return std::log(std::max(v, kLogClamp)); },
      [](double v, double) { return v > kLogClamp ? 1.0 / v : 0.0; });
}

TensorPtr abs_value(ComputeTape* tape, const TensorPtr& x) {
  return unary_pointwise(
      tape, x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

namespace {

enum class BinKind { add, sub, mul };

TensorPtr binary_pointwise(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b, BinKind kind) {
  if (!a || !b) throw dimension_error("binary op: null operand");
  const bool a_scalar = a->numel() == 1;
  const bool b_scalar = b->numel() == 1;
  if (!a_scalar && !b_scalar && !same_shape(*a, *b))
    throw dimension_error("binary op: shape mismatch (only exact shapes or scalar broadcast)");

  const Tensor& big = b_scalar ? *a : *b;
  auto out = Tensor::zeros(big.shape);
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a->values[a_scalar ? 0 : i];
    const double bv = b->values[b_scalar ? 0 : i];
    out->values[i] = kind == BinKind::add ? av + bv : kind == BinKind::sub ? av - bv : av * bv;
  }

  finish(tape, {a, b}, out, [a, b, out, kind, a_scalar, b_scalar]() {
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = out->grad[i];
      if (g == 0.0) continue;
      const double av = a->values[a_scalar ? 0 : i];
      const double bv = b->values[b_scalar ? 0 : i];
      if (a->requires_grad) {
        const double da = kind == BinKind::mul ? bv : 1.0;
        a->grad[a_scalar ? 0 : i] += da * g;
      }
      if (b->requires_grad) {
        const double db = kind == BinKind::add ? 1.0 : kind == BinKind::sub ? -1.0 : av;
        b->grad[b_scalar ? 0 : i] += db * g;
      }
    }
  });
  return out;
}

}  // namespace

TensorPtr add(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b) {
  return binary_pointwise(tape, a, b, BinKind::add);
}
TensorPtr sub(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b) {
  return binary_pointwise(tape, a, b, BinKind::sub);
}
TensorPtr mul(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b) {
  return binary_pointwise(tape, a, b, BinKind::mul);
}

TensorPtr scale(ComputeTape* tape, const TensorPtr& x, double factor) {
  return unary_pointwise(
      tape, x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

TensorPtr min_scalar(ComputeTape* tape, const TensorPtr& x, double cap) {
  return unary_pointwise(
      tape, x, [cap](double v) { return std::min(v, cap); },
      [cap](double v, double) { return v < cap ? 1.0 : 0.0; });
}

TensorPtr softmax_rows(ComputeTape* tape, const TensorPtr& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t t_len = x->shape[0];
  const std::size_t c = x->shape[1];
  auto out = Tensor::zeros(x->shape);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = x->values.data() + t * c;
    double* orow = out->values.data() + t * c;
    double m = row[0];
    for (std::size_t i = 1; i < c; ++i) m = std::max(m, row[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      orow[i] = std::exp(row[i] - m);
      z += orow[i];
    }
    for (std::size_t i = 0; i < c; ++i) orow[i] /= z;
  }

  finish(tape, {x}, out, [x, out]() {
    if (!x->requires_grad) return;
    const std::size_t t_len = x->shape[0];
    const std::size_t c = x->shape[1];
    for (std::size_t t = 0; t < t_len; ++t) {
      const double* p = out->values.data() + t * c;
      const double* g = out->grad.data() + t * c;
      double dot = 0.0;
      for (std::size_t i = 0; i < c; ++i) dot += p[i] * g[i];
      double* gx = x->grad.data() + t * c;
      for (std::size_t i = 0; i < c; ++i) gx[i] += p[i] * (g[i] - dot);
    }
  });
  return out;
}

TensorPtr concat_cols(ComputeTape* tape, const TensorPtr& a, const TensorPtr& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  if (a->shape[0] != b->shape[0]) throw dimension_error("concat_cols: row count mismatch");
  const std::size_t t_len = a->shape[0];
  const std::size_t ca = a->shape[1];
  const std::size_t cb = b->shape[1];
  auto out = Tensor::zeros({t_len, ca + cb});
  for (std::size_t t = 0; t < t_len; ++t) {
    double* orow = out->values.data() + t * (ca + cb);
    std::copy_n(a->values.data() + t * ca, ca, orow);
    std::copy_n(b->values.data() + t * cb, cb, orow + ca);
  }
  finish(tape, {a, b}, out, [a, b, out]() {
    const std::size_t t_len = a->shape[0];
    const std::size_t ca = a->shape[1];
    const std::size_t cb = b->shape[1];
    for (std::size_t t = 0; t < t_len; ++t) {
      const double* grow = out->grad.data() + t * (ca + cb);
      if (a->requires_grad)
        for (std::size_t i = 0; i < ca; ++i) a->grad[t * ca + i] += grow[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < cb; ++i) b->grad[t * cb + i] += grow[ca + i];
    }
  });
  return out;
}

TensorPtr slice_rows(ComputeTape* tape, const TensorPtr& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_rows");
  if (start + count > x->shape[0] || count == 0)
    throw dimension_error("slice_rows: range out of bounds");
  const std::size_t c = x->shape[1];
  auto out = Tensor::zeros({count, c});
  std::copy_n(x->values.data() + start * c, count * c, out->values.data());
  finish(tape, {x}, out, [x, out, start, count]() {
    if (!x->requires_grad) return;
    const std::size_t c = x->shape[1];
    for (std::size_t i = 0; i < count * c; ++i) x->grad[start * c + i] += out->grad[i];
  });
  return out;
}

TensorPtr row_sum(ComputeTape* tape, const TensorPtr& x) {
  require_matrix(x, "row_sum");
  const std::size_t t_len = x->shape[0];
  const std::size_t c = x->shape[1];
  auto out = Tensor::zeros({t_len, 1});
  for (std::size_t t = 0; t < t_len; ++t) {
    double acc = 0.0;
    const double* row = x->values.data() + t * c;
    for (std::size_t i = 0; i < c; ++i) acc += row[i];
    out->values[t] = acc;
  }
  finish(tape, {x}, out, [x, out]() {
    if (!x->requires_grad) return;
    const std::size_t t_len = x->shape[0];
    const std::size_t c = x->shape[1];
    for (std::size_t t = 0; t < t_len; ++t) {
      const double g = out->grad[t];
      if (g == 0.0) continue;
      double* gx = x->grad.data() + t * c;
      for (std::size_t i = 0; i < c; ++i) gx[i] += g;
    }
  });
  return out;
}

TensorPtr pick_per_row(ComputeTape* tape, const TensorPtr& x, const std::vector<std::size_t>& idx) {
  require_matrix(x, "pick_per_row");
  const std::size_t t_len = x->shape[0];
  const std::size_t c = x->shape[1];
  if (idx.size() != t_len) throw dimension_error("pick_per_row: index count mismatch");
  auto out = Tensor::zeros({t_len, 1});
  for (std::size_t t = 0; t < t_len; ++t) {
    if (idx[t] >= c) throw dimension_error("pick_per_row: column index out of range");
    out->values[t] = x->values[t * c + idx[t]];
  }
  finish(tape, {x}, out, [x, out, idx]() {
    if (!x->requires_grad) return;
    const std::size_t c = x->shape[1];
    for (std::size_t t = 0; t < idx.size(); ++t) x->grad[t * c + idx[t]] += out->grad[t];
  });
  return out;
}

TensorPtr sum_all(ComputeTape* tape, const TensorPtr& x) {
  if (!x) throw dimension_error("sum_all: null operand");
  double acc = 0.0;
  for (double v : x->values) acc += v;
  auto out = Tensor::scalar(acc);
  finish(tape, {x}, out, [x, out]() {
    if (!x->requires_grad) return;
    const double g = out->grad[0];
    for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += g;
  });
  return out;
}

TensorPtr dropout(ComputeTape* tape, const TensorPtr& x, double p, std::mt19937_64& rng,
                  bool training) {
  if (p < 0.0 || p >= 1.0) throw parameter_error("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  auto mask = Tensor::zeros(x->shape);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask->numel(); ++i)
    mask->values[i] = unit(rng) >= p ? keep_scale : 0.0;
  return mul(tape, x, mask);
}

}  // namespace subseg::ops

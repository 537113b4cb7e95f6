#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <vector>

#include "subseg/errors.hpp"

namespace subseg {

// Dense row-major tensor of 64-bit reals. A gradient buffer of identical
// shape is allocated only when requires_grad is set; reverse-mode ops
// accumulate into it.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, bool with_grad = false)
      : shape(std::move(dims)) {
    values.assign(numel_of(shape), 0.0);
    set_requires_grad(with_grad);
  }

  static std::shared_ptr<Tensor> zeros(std::vector<std::size_t> dims, bool with_grad = false) {
    return std::make_shared<Tensor>(std::move(dims), with_grad);
  }

  static std::shared_ptr<Tensor> from(std::vector<std::size_t> dims, std::vector<double> data,
                                      bool with_grad = false) {
    auto t = std::make_shared<Tensor>(std::move(dims), with_grad);
    if (data.size() != t->numel())
      throw dimension_error("tensor data size does not match shape");
    t->values = std::move(data);
    return t;
  }

  static std::shared_ptr<Tensor> scalar(double v, bool with_grad = false) {
    return from({1}, {v}, with_grad);
  }

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-d accessors; rank is checked by the ops that use them.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  void set_requires_grad(bool flag) {
    requires_grad = flag;
    if (flag)
      grad.assign(values.size(), 0.0);
    else
      grad.clear();
  }

  void zero_grad() {
    if (requires_grad) grad.assign(values.size(), 0.0);
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::size_t numel_of(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) {
      if (d == 0) throw dimension_error("tensor extents must be positive");
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;
};

using TensorPtr = std::shared_ptr<Tensor>;

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace subseg

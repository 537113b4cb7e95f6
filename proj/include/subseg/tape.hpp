#pragma once

#include <functional>
#include <vector>

#include "subseg/tensor.hpp"

namespace subseg {

// Record of executed differentiable ops in topological (execution) order.
// backward() replays the records in exact reverse order, accumulating
// gradients into every tensor that requires them. Non-leaf gradients are
// reset at the start of each backward pass; leaf gradients accumulate
// across passes until explicitly zeroed.
class ComputeTape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<TensorPtr> inputs, TensorPtr output, BackwardFn fn) {
    steps_.push_back(Step{std::move(inputs), std::move(output), std::move(fn)});
  }

  std::size_t size() const { return steps_.size(); }

  void backward(const TensorPtr& root);

  void clear() { steps_.clear(); }

 private:
  struct Step {
    std::vector<TensorPtr> inputs;
    TensorPtr output;
    BackwardFn fn;
  };
  std::vector<Step> steps_;
};

}  // namespace subseg

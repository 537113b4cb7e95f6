#include "subseg/tape.hpp"

#include "subseg/errors.hpp"

namespace subseg {

void ComputeTape::backward(const TensorPtr& root) {
  if (!root) throw usage_error("backward: null root");
  if (root->numel() != 1) throw usage_error("backward: root must be a scalar");
  if (!root->requires_grad)
    throw usage_error("backward: root does not participate in differentiation");

  // Intermediates are exactly the outputs of recorded steps. Their gradients
  // belong to this pass only; leaf gradients are left untouched so repeated
  // passes accumulate.
  for (auto& step : steps_) step.output->zero_grad();

  root->grad[0] += 1.0;

  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (it->fn) it->fn();
  }
}

}  // namespace subseg

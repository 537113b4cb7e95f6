#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "subseg/tape.hpp"
#include "subseg/tensor.hpp"

namespace testsupport {

// Central finite differences against reverse-mode gradients. `build` must
// evaluate the scalar output from scratch (it is re-run for every probe).
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t probes = 0;
};

inline GradCheckResult gradcheck(
    const std::function<subseg::TensorPtr(subseg::ComputeTape*)>& build,
    const std::vector<subseg::TensorPtr>& leaves, double h = 1e-4) {
  using namespace subseg;

  for (const TensorPtr& leaf : leaves) leaf->zero_grad();
  ComputeTape tape;
  TensorPtr out = build(&tape);
  tape.backward(out);

  GradCheckResult result;
  for (const TensorPtr& leaf : leaves) {
    for (std::size_t i = 0; i < leaf->numel(); ++i) {
      const double saved = leaf->values[i];
      leaf->values[i] = saved + h;
      const double up = build(nullptr)->values[0];
      leaf->values[i] = saved - h;
      const double down = build(nullptr)->values[0];
      leaf->values[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = leaf->grad[i];
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-4});
      result.max_rel_err = std::max(result.max_rel_err,
                                    std::fabs(numeric - analytic) / denom);
      ++result.probes;
    }
  }
  return result;
}

}  // namespace testsupport

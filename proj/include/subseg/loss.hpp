#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "subseg/labels.hpp"
#include "subseg/ops.hpp"
#include "subseg/tensor.hpp"

namespace subseg {

struct LossConfig {
  double lambda = 0.15;  // smoothness term weight
  double gamma = 0.25;   // transition term weight
  double tau = 4.0;      // smoothness truncation
  std::vector<double> class_weights;  // empty = unit weights
};

// Binary validity mask over class transitions. M[i][j] == 1 marks i -> j as
// INVALID (penalized); the diagonal is always 0 since staying in a class is
// always allowed.
struct TransitionMatrix {
  TensorPtr m;  // classes x classes, constant

  std::size_t classes() const { return m ? m->rows() : 0; }

  static TransitionMatrix from_values(std::size_t classes, const std::vector<double>& entries);
  static TransitionMatrix load(const std::string& path);
  void save(const std::string& path) const;
};

// Class-weighted mean negative log-likelihood over frames:
//   -(1/T) sum_t weights[c_t] * log probs[t, c_t]
TensorPtr cross_entropy(ComputeTape* tape, const TensorPtr& probs, const LabelSequence& labels,
                        const std::vector<double>& weights);

// Truncated mean squared step in log-probabilities:
//   (1/(T-1)) sum_t min(||log P_t - log P_{t-1}||_2^2, tau)
// T < 2 yields 0 (with a stderr note) since no step exists.
TensorPtr t_mse(ComputeTape* tape, const TensorPtr& probs, double tau);

// Invalid-transition penalty: w_t = P_{t-1}^T M P_t gates the L1 change
//   (1/(T-1)) sum_t w_t * ||P_t - P_{t-1}||_1
TensorPtr transition_loss(ComputeTape* tape, const TensorPtr& probs, const TransitionMatrix& m);

// Sum over stages of CE + lambda * T-MSE + gamma * transition penalty.
// Terms with a zero coefficient are skipped entirely.
TensorPtr composite_loss(ComputeTape* tape, const std::vector<TensorPtr>& stage_probs,
                         const LabelSequence& labels, const LossConfig& cfg,
                         const TransitionMatrix& m);

// w_c = T_total / (classes * count_c), renormalized to mean 1. Classes that
// never occur are treated as occurring once so the weights stay finite.
std::vector<double> inverse_frequency_weights(const std::vector<LabelSequence>& labels,
                                              std::size_t classes);

}  // namespace subseg

#include "subseg/loss.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "subseg/errors.hpp"

namespace subseg {

TransitionMatrix TransitionMatrix::from_values(std::size_t classes,
                                               const std::vector<double>& entries) {
  if (classes == 0) throw parameter_error("transition matrix: class count must be positive");
  if (entries.size() != classes * classes)
    throw dimension_error("transition matrix: entry count does not match class count");
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = 0; j < classes; ++j) {
      const double v = entries[i * classes + j];
      if (v != 0.0 && v != 1.0)
        throw parameter_error("transition matrix: entries must be 0 or 1");
      if (i == j && v != 0.0)
        throw parameter_error("transition matrix: diagonal must be 0 (self-transitions valid)");
    }
  }
  TransitionMatrix m;
  m.m = Tensor::from({classes, classes}, entries);
  return m;
}

TransitionMatrix TransitionMatrix::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open transition matrix '" + path + "'", 0);
  std::size_t classes = 0;
  if (!(in >> classes) || classes == 0)
    throw format_error("'" + path + "': expected positive class count on the first line", 0);
  std::vector<double> entries;
  entries.reserve(classes * classes);
  for (std::size_t i = 0; i < classes * classes; ++i) {
    double v;
    if (!(in >> v)) {
      const std::streamoff pos = in.tellg();
      throw format_error("'" + path + "': expected " + std::to_string(classes * classes) +
                             " matrix entries",
                         pos < 0 ? 0 : static_cast<std::size_t>(pos));
    }
    entries.push_back(v);
  }
  return from_values(classes, entries);
}

void TransitionMatrix::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw format_error("cannot open transition matrix '" + path + "' for writing", 0);
  const std::size_t c = classes();
  out << c << "\n";
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (j) out << ' ';
      out << static_cast<int>(m->values[i * c + j]);
    }
    out << "\n";
  }
  if (!out) throw format_error("failed writing transition matrix '" + path + "'", 0);
}

namespace {

void check_probs(const TensorPtr& probs, const char* who) {
  if (!probs || probs->rank() != 2)
    throw dimension_error(std::string(who) + ": probabilities must be a T x C matrix");
}

}  // namespace

TensorPtr cross_entropy(ComputeTape* tape, const TensorPtr& probs, const LabelSequence& labels,
                        const std::vector<double>& weights) {
  check_probs(probs, "cross_entropy");
  const std::size_t t_len = probs->rows();
  const std::size_t c = probs->cols();
  if (labels.size() != t_len)
    throw dimension_error("cross_entropy: label count does not match sequence length");
  if (!weights.empty() && weights.size() != c)
    throw dimension_error("cross_entropy: weight count does not match class count");

  auto picked = ops::pick_per_row(tape, ops::log_clamped(tape, probs), labels);
  auto per_frame_w = Tensor::zeros({t_len, 1});
  for (std::size_t t = 0; t < t_len; ++t)
    per_frame_w->values[t] = weights.empty() ? 1.0 : weights[labels[t]];
  auto weighted = ops::mul(tape, picked, per_frame_w);
  return ops::scale(tape, ops::sum_all(tape, weighted), -1.0 / static_cast<double>(t_len));
}

TensorPtr t_mse(ComputeTape* tape, const TensorPtr& probs, double tau) {
  check_probs(probs, "t_mse");
  if (tau <= 0.0) throw parameter_error("t_mse: truncation must be positive");
  const std::size_t t_len = probs->rows();
  if (t_len < 2) {
    std::cerr << "t_mse: sequence of length " << t_len << " has no temporal step; returning 0\n";
    return Tensor::scalar(0.0);
  }
  auto logp = ops::log_clamped(tape, probs);
  auto prev = ops::slice_rows(tape, logp, 0, t_len - 1);
  auto cur = ops::slice_rows(tape, logp, 1, t_len - 1);
  auto diff = ops::sub(tape, cur, prev);
  auto sq_step = ops::row_sum(tape, ops::mul(tape, diff, diff));
  auto truncated = ops::min_scalar(tape, sq_step, tau);
  return ops::scale(tape, ops::sum_all(tape, truncated), 1.0 / static_cast<double>(t_len - 1));
}

TensorPtr transition_loss(ComputeTape* tape, const TensorPtr& probs, const TransitionMatrix& m) {
  check_probs(probs, "transition_loss");
  const std::size_t t_len = probs->rows();
  const std::size_t c = probs->cols();
  if (m.classes() != c)
    throw dimension_error("transition_loss: matrix size does not match class count");
  if (t_len < 2) {
    std::cerr << "transition_loss: sequence of length " << t_len
              << " has no transition; returning 0\n";
    return Tensor::scalar(0.0);
  }
  auto prev = ops::slice_rows(tape, probs, 0, t_len - 1);
  auto cur = ops::slice_rows(tape, probs, 1, t_len - 1);
  // (M P_t)_i via the affine op with constant weight M, then the quadratic
  // form as a gated row sum.
  auto m_cur = ops::linear(tape, cur, m.m, nullptr);
  auto invalid_mass = ops::row_sum(tape, ops::mul(tape, prev, m_cur));
  auto l1_gap = ops::row_sum(tape, ops::abs_value(tape, ops::sub(tape, cur, prev)));
  auto gated = ops::mul(tape, invalid_mass, l1_gap);
  return ops::scale(tape, ops::sum_all(tape, gated), 1.0 / static_cast<double>(t_len - 1));
}

TensorPtr composite_loss(ComputeTape* tape, const std::vector<TensorPtr>& stage_probs,
                         const LabelSequence& labels, const LossConfig& cfg,
                         const TransitionMatrix& m) {
  if (stage_probs.empty()) throw usage_error("composite_loss: no stage outputs supplied");
  if (cfg.tau <= 0.0) throw parameter_error("composite_loss: truncation must be positive");
  if (cfg.lambda < 0.0 || cfg.gamma < 0.0)
    throw parameter_error("composite_loss: term weights must be nonnegative");

  TensorPtr total;
  for (const TensorPtr& probs : stage_probs) {
    TensorPtr term = cross_entropy(tape, probs, labels, cfg.class_weights);
    if (cfg.lambda > 0.0)
      term = ops::add(tape, term, ops::scale(tape, t_mse(tape, probs, cfg.tau), cfg.lambda));
    if (cfg.gamma > 0.0)
      term = ops::add(tape, term, ops::scale(tape, transition_loss(tape, probs, m), cfg.gamma));
    total = total ? ops::add(tape, total, term) : term;
  }
  return total;
}

std::vector<double> inverse_frequency_weights(const std::vector<LabelSequence>& labels,
                                              std::size_t classes) {
  if (classes == 0) throw parameter_error("inverse_frequency_weights: class count must be positive");
  std::vector<double> counts(classes, 0.0);
  double total = 0.0;
  for (const LabelSequence& seq : labels) {
    for (std::size_t c : seq) {
      if (c >= classes)
        throw dimension_error("inverse_frequency_weights: label id out of range");
      counts[c] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw usage_error("inverse_frequency_weights: no labels supplied");

  std::vector<double> w(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c)
    w[c] = total / (static_cast<double>(classes) * std::max(counts[c], 1.0));
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(classes);
  for (double& v : w) v /= mean;
  return w;
}

}  // namespace subseg

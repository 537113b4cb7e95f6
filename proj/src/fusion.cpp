#include "subseg/fusion.hpp"

#include <cmath>
#include <string>

#include "subseg/errors.hpp"

namespace subseg {

void validate_finite(const FeatureSequence& seq, const char* who) {
  if (!seq.data) throw dimension_error(std::string(who) + ": missing feature data");
  if (!seq.data->all_finite())
    throw numeric_error(std::string(who) + ": feature sequence contains non-finite values");
}

FusionParams FusionParams::init(std::size_t feature_dim, std::mt19937_64& rng) {
  if (feature_dim == 0) throw parameter_error("fusion: feature dimension must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * feature_dim));
  std::uniform_real_distribution<double> unif(-bound, bound);
  FusionParams p;
  p.w = Tensor::zeros({feature_dim, 2 * feature_dim}, true);
  p.b = Tensor::zeros({feature_dim}, true);
  for (double& v : p.w->values) v = unif(rng);
  return p;
}

namespace {

void check_pair(const FeatureSequence& rgb, const FeatureSequence& flow, std::size_t feature_dim) {
  validate_finite(rgb, "fusion(rgb)");
  validate_finite(flow, "fusion(flow)");
  if (rgb.T() != flow.T())
    throw dimension_error("fusion: rgb and flow sequences differ in length");
  if (rgb.D() != feature_dim || flow.D() != feature_dim)
    throw dimension_error("fusion: stream width does not match the gate parameters");
}

}  // namespace

TensorPtr attention_coefficients(ComputeTape* tape, const FusionParams& params,
                                 const FeatureSequence& rgb, const FeatureSequence& flow) {
  check_pair(rgb, flow, params.w->shape[0]);
  auto both = ops::concat_cols(tape, rgb.data, flow.data);
  return ops::sigmoid(tape, ops::linear(tape, both, params.w, params.b));
}

FeatureSequence fuse(ComputeTape* tape, const FusionParams& params, const FeatureSequence& rgb,
                     const FeatureSequence& flow) {
  auto alpha = attention_coefficients(tape, params, rgb, flow);
  auto ones = Tensor::from({1}, {1.0});
  auto blended = ops::add(tape, ops::mul(tape, alpha, rgb.data),
                          ops::mul(tape, ops::sub(tape, ones, alpha), flow.data));
  return FeatureSequence{Modality::fused, blended};
}

}  // namespace subseg

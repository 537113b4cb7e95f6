#pragma once

#include <random>

#include "subseg/ops.hpp"
#include "subseg/tensor.hpp"

namespace subseg {

// Which stream a frame-level feature matrix came from.
enum class Modality { rgb, flow, fused };

// A T x D feature matrix tagged with its stream of origin.
struct FeatureSequence {
  Modality modality = Modality::fused;
  TensorPtr data;

  std::size_t T() const { return data ? data->rows() : 0; }
  std::size_t D() const { return data ? data->cols() : 0; }
};

// Throws numeric_error if the sequence contains NaN/inf entries.
void validate_finite(const FeatureSequence& seq, const char* who);

// Parameters of the gating network that blends the two streams. The gate
// sees both frames concatenated, so the weight is D x 2D.
struct FusionParams {
  TensorPtr w;  // D x 2D
  TensorPtr b;  // D

  static FusionParams init(std::size_t feature_dim, std::mt19937_64& rng);
};

// Per-frame, per-channel gate alpha = sigma(W [rgb ; flow] + b), values in (0, 1).
TensorPtr attention_coefficients(ComputeTape* tape, const FusionParams& params,
                                 const FeatureSequence& rgb, const FeatureSequence& flow);

// Convex per-channel blend: fused = alpha * rgb + (1 - alpha) * flow.
FeatureSequence fuse(ComputeTape* tape, const FusionParams& params, const FeatureSequence& rgb,
                     const FeatureSequence& flow);

}  // namespace subseg

#pragma once

#include <cstddef>

#include "subseg/labels.hpp"

namespace subseg {

// Modal label over a truncated window around each frame; ties keep the
// original center label. Applied repeatedly until the sequence stops
// changing, so the result is a fixed point (idempotent).
LabelSequence median_filter(const LabelSequence& labels, std::size_t window);

// Repeatedly merges every run shorter than min_len into its longer
// neighbouring run (ties prefer the preceding run) until none remains.
// Shortest runs are absorbed first; among equals the rightmost goes first.
LabelSequence collapse_short_runs(const LabelSequence& labels, std::size_t min_len);

}  // namespace subseg

#pragma once

#include <cstddef>
#include <vector>

namespace subseg {

// Per-frame class ids, one entry per time step.
using LabelSequence = std::vector<std::size_t>;

}  // namespace subseg

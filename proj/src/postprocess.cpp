#include "subseg/postprocess.hpp"

#include <algorithm>
#include <map>

#include "subseg/errors.hpp"
#include "subseg/metrics.hpp"

namespace subseg {

namespace {

LabelSequence mode_pass(const LabelSequence& labels, std::size_t window) {
  const std::size_t t_len = labels.size();
  const std::size_t half = window / 2;
  LabelSequence out(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(t + half + 1, t_len);
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t u = lo; u < hi; ++u) ++counts[labels[u]];
    std::size_t best_cls = labels[t], best_count = 0;
    bool tie = false;
    for (const auto& [cls, n] : counts) {
      if (n > best_count) {
        best_count = n;
        best_cls = cls;
        tie = false;
      } else if (n == best_count) {
        tie = true;
      }
    }
    out[t] = tie ? labels[t] : best_cls;
  }
  return out;
}

}  // namespace

LabelSequence median_filter(const LabelSequence& labels, std::size_t window) {
  if (window % 2 == 0) throw parameter_error("median_filter: window must be odd");
  if (labels.empty()) throw usage_error("median_filter: empty label sequence");
  if (window == 1) return labels;

  // A single pass is not idempotent (alternating patterns shift under it),
  // so run to a fixed point. The pass cap is a safety net; W=3 converges in
  // far fewer sweeps.
  LabelSequence cur = labels;
  for (std::size_t pass = 0; pass < 2 * labels.size() + 8; ++pass) {
    LabelSequence next = mode_pass(cur, window);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

LabelSequence collapse_short_runs(const LabelSequence& labels, std::size_t min_len) {
  if (min_len < 1) throw parameter_error("collapse_short_runs: minimum run length must be >= 1");
  if (labels.empty()) throw usage_error("collapse_short_runs: empty label sequence");
  if (min_len == 1) return labels;

  SegmentList runs = to_segments(labels);
  while (runs.size() > 1) {
    // Shortest run first; among equals take the rightmost.
    std::size_t victim = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (runs[i].length() < min_len &&
          (victim == runs.size() || runs[i].length() <= runs[victim].length()))
        victim = i;
    if (victim == runs.size()) break;

    // Absorb into the longer neighbour, preferring the preceding run on ties.
    std::size_t absorber;
    if (victim == 0)
      absorber = 1;
    else if (victim + 1 == runs.size())
      absorber = victim - 1;
    else
      absorber = runs[victim + 1].length() > runs[victim - 1].length() ? victim + 1 : victim - 1;

    runs[victim].cls = runs[absorber].cls;
    SegmentList merged;
    for (const Segment& r : runs) {
      if (!merged.empty() && merged.back().cls == r.cls)
        merged.back().end = r.end;
      else
        merged.push_back(r);
    }
    runs = std::move(merged);
  }
  return expand_segments(runs);
}

}  // namespace subseg

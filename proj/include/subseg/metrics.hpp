#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "subseg/labels.hpp"

namespace subseg {

// Maximal constant run over [start, end) frames.
struct Segment {
  std::size_t cls = 0;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  std::size_t length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

using SegmentList = std::vector<Segment>;

// Run-length encoding of a label sequence; inverse of expand_segments.
SegmentList to_segments(const LabelSequence& labels);
LabelSequence expand_segments(const SegmentList& segments);

// 100 * (# frames equal) / T.
double frame_accuracy(const LabelSequence& pred, const LabelSequence& gt);

// Segmental F1 at the given IoU threshold. Matching is greedy in prediction
// order: each predicted segment takes the highest-IoU unconsumed ground-truth
// segment of the same class (ties to the earliest) and counts as a true
// positive iff the IoU reaches the threshold.
double f1_at(const LabelSequence& pred, const LabelSequence& gt, double threshold);

// 100 * (1 - Levenshtein(pred transcript, gt transcript) / max length), not
// below 0.
double edit_score(const LabelSequence& pred, const LabelSequence& gt);

// Unit-cost insert/delete/substitute distance between id sequences.
std::size_t levenshtein_distance(const std::vector<std::size_t>& a,
                                 const std::vector<std::size_t>& b);

struct MetricReport {
  double acc = 0.0;
  std::map<int, double> f1;  // threshold percent (10/25/50) -> score
  double edit = 0.0;
};

// Corpus-level report: accuracy and F1 pool frame/segment counts across all
// sequences; edit score is averaged per sequence.
MetricReport evaluate_many(const std::vector<LabelSequence>& preds,
                           const std::vector<LabelSequence>& gts);

// Human-readable table / line-oriented key=value records of the same report.
std::string format_report_table(const MetricReport& report);
std::string format_report_records(const MetricReport& report);

}  // namespace subseg

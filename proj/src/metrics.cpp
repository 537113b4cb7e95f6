#include "subseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "subseg/errors.hpp"

namespace subseg {

SegmentList to_segments(const LabelSequence& labels) {
  if (labels.empty()) throw usage_error("to_segments: empty label sequence");
  SegmentList out;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[start]) {
      out.push_back(Segment{labels[start], start, t});
      start = t;
    }
  }
  return out;
}

LabelSequence expand_segments(const SegmentList& segments) {
  LabelSequence out;
  for (const Segment& s : segments) {
    if (s.end <= s.start) throw dimension_error("expand_segments: empty segment");
    out.insert(out.end(), s.length(), s.cls);
  }
  return out;
}

double frame_accuracy(const LabelSequence& pred, const LabelSequence& gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw dimension_error("frame_accuracy: sequences must be nonempty and equal length");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) hits += pred[t] == gt[t];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

double iou(const Segment& a, const Segment& b) {
  const std::size_t inter_lo = std::max(a.start, b.start);
  const std::size_t inter_hi = std::min(a.end, b.end);
  const std::size_t inter = inter_hi > inter_lo ? inter_hi - inter_lo : 0;
  const std::size_t uni = a.length() + b.length() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct MatchCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

MatchCounts match_segments(const SegmentList& pred, const SegmentList& gt, double threshold) {
  std::vector<bool> taken(gt.size(), false);
  MatchCounts c;
  for (const Segment& p : pred) {
    double best = -1.0;
    std::size_t best_idx = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g] || gt[g].cls != p.cls) continue;
      const double v = iou(p, gt[g]);
      if (v > best) {  // strict >: ties stay with the earliest candidate
        best = v;
        best_idx = g;
      }
    }
    if (best_idx < gt.size() && best >= threshold) {
      taken[best_idx] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = gt.size() - c.tp;
  return c;
}

double f1_from_counts(const MatchCounts& c) {
  if (c.tp + c.fp == 0 && c.fn == 0) return 100.0;  // nothing on either side
  if (c.tp == 0) return 0.0;
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

std::vector<std::size_t> transcript(const LabelSequence& labels) {
  std::vector<std::size_t> out;
  for (const Segment& s : to_segments(labels)) out.push_back(s.cls);
  return out;
}

}  // namespace

std::size_t levenshtein_distance(const std::vector<std::size_t>& a,
                                 const std::vector<std::size_t>& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t subst = diag + (a[i - 1] != b[j - 1] ? 1 : 0);
      diag = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, subst});
    }
  }
  return row[b.size()];
}

double f1_at(const LabelSequence& pred, const LabelSequence& gt, double threshold) {
  if (pred.size() != gt.size() || pred.empty())
    throw dimension_error("f1_at: sequences must be nonempty and equal length");
  if (threshold <= 0.0 || threshold > 1.0)
    throw parameter_error("f1_at: threshold must lie in (0, 1]");
  return f1_from_counts(match_segments(to_segments(pred), to_segments(gt), threshold));
}

double edit_score(const LabelSequence& pred, const LabelSequence& gt) {
  const auto tp = transcript(pred);
  const auto tg = transcript(gt);
  const std::size_t longest = std::max(tp.size(), tg.size());
  const double score = 100.0 * (1.0 - static_cast<double>(levenshtein_distance(tp, tg)) /
                                          static_cast<double>(longest));
  return std::max(score, 0.0);
}

MetricReport evaluate_many(const std::vector<LabelSequence>& preds,
                           const std::vector<LabelSequence>& gts) {
  if (preds.size() != gts.size() || preds.empty())
    throw dimension_error("evaluate_many: need equally many nonempty prediction/truth pairs");

  std::size_t frames = 0, frame_hits = 0;
  std::map<int, MatchCounts> pooled{{10, {}}, {25, {}}, {50, {}}};
  double edit_sum = 0.0;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    const LabelSequence& p = preds[v];
    const LabelSequence& g = gts[v];
    if (p.size() != g.size() || p.empty())
      throw dimension_error("evaluate_many: sequence " + std::to_string(v) +
                            " has mismatched lengths");
    frames += p.size();
    for (std::size_t t = 0; t < p.size(); ++t) frame_hits += p[t] == g[t];
    const SegmentList sp = to_segments(p), sg = to_segments(g);
    for (auto& [thr, counts] : pooled) {
      const MatchCounts c = match_segments(sp, sg, thr / 100.0);
      counts.tp += c.tp;
      counts.fp += c.fp;
      counts.fn += c.fn;
    }
    edit_sum += edit_score(p, g);
  }

  MetricReport r;
  r.acc = 100.0 * static_cast<double>(frame_hits) / static_cast<double>(frames);
  for (const auto& [thr, counts] : pooled) r.f1[thr] = f1_from_counts(counts);
  r.edit = edit_sum / static_cast<double>(preds.size());
  return r;
}

std::string format_report_table(const MetricReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "metric       value\n"
                "-----------  ------\n"
                "accuracy     %6.2f\n"
                "f1@10        %6.2f\n"
                "f1@25        %6.2f\n"
                "f1@50        %6.2f\n"
                "edit         %6.2f\n",
                report.acc, report.f1.at(10), report.f1.at(25), report.f1.at(50), report.edit);
  return buf;
}

std::string format_report_records(const MetricReport& report) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "acc=" << report.acc << "\n";
  for (const auto& [thr, v] : report.f1) out << "f1@" << thr << "=" << v << "\n";
  out << "edit=" << report.edit << "\n";
  return out.str();
}

}  // namespace subseg

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "subseg/errors.hpp"
#include "subseg/metrics.hpp"
#include "support/oracles.hpp"

using namespace subseg;

namespace {

LabelSequence random_labels(std::size_t max_segments, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> nseg(1, max_segments);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  std::uniform_int_distribution<std::size_t> cls(0, classes - 1);
  LabelSequence out;
  std::size_t segments = nseg(rng);
  std::size_t prev = classes;  // sentinel
  for (std::size_t s = 0; s < segments; ++s) {
    std::size_t c = cls(rng);
    while (c == prev) c = cls(rng);
    prev = c;
    out.insert(out.end(), len(rng), c);
  }
  return out;
}

// Segmentation-shaped prediction: the ground truth with jittered boundaries,
// occasionally relabeled or split runs.
LabelSequence perturb(const LabelSequence& gt, std::size_t classes, std::mt19937_64& rng) {
  LabelSequence pred = gt;
  std::uniform_int_distribution<std::size_t> pick(0, pred.size() - 1);
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<std::size_t> cls(0, classes - 1);
  const std::size_t edits = 1 + pick(rng) % 4;
  for (std::size_t e = 0; e < edits; ++e) {
    switch (kind(rng)) {
      case 0: {  // shift one boundary left/right by one frame
        const std::size_t i = pick(rng);
        if (i + 1 < pred.size()) pred[i + 1] = pred[i];
        break;
      }
      case 1: {  // relabel a short stretch
        const std::size_t i = pick(rng);
        const std::size_t c = cls(rng);
        for (std::size_t j = i; j < std::min(pred.size(), i + 3); ++j) pred[j] = c;
        break;
      }
      case 2: {  // copy a frame backwards (boundary shift the other way)
        const std::size_t i = pick(rng);
        if (i > 0) pred[i - 1] = pred[i];
        break;
      }
      default:
        break;  // leave as-is
    }
  }
  return pred;
}

LabelSequence upsample(const LabelSequence& x, std::size_t r) {
  LabelSequence out;
  for (std::size_t v : x) out.insert(out.end(), r, v);
  return out;
}

}  // namespace

TEST_CASE("run-length encoding round trip") {
  LabelSequence x{0, 0, 1, 1, 1};
  SegmentList s = to_segments(x);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == Segment{0, 0, 2});
  CHECK(s[1] == Segment{1, 2, 5});
  CHECK(expand_segments(s) == x);

  CHECK(to_segments({7}) == SegmentList{Segment{7, 0, 1}});
  CHECK_THROWS_AS(to_segments({}), usage_error);

  std::mt19937_64 rng(31);
  for (int i = 0; i < 50; ++i) {
    LabelSequence r = random_labels(8, 4, rng);
    CHECK(expand_segments(to_segments(r)) == r);
  }
}

TEST_CASE("frame accuracy") {
  CHECK(frame_accuracy({1, 2, 3}, {1, 2, 3}) == 100.0);
  CHECK(frame_accuracy({0, 0, 0}, {1, 1, 1}) == 0.0);
  CHECK(frame_accuracy({1, 1, 1, 1, 1, 0, 0, 0, 0, 0},
                       {1, 1, 1, 1, 1, 1, 1, 1, 1, 1}) == 50.0);
  CHECK_THROWS_AS(frame_accuracy({1, 2}, {1}), dimension_error);
}

TEST_CASE("segmental F1 on boundary-quality cases") {
  // gt: A over [0,10), B over [10,20).
  LabelSequence gt = expand_segments({{0, 0, 10}, {1, 10, 20}});

  // One long A prediction swallows B: the A matches at IoU 0.5 but B is
  // missed, so P=1, R=0.5.
  LabelSequence coarse(20, 0);
  CHECK(f1_at(coarse, gt, 0.5) == doctest::Approx(200.0 / 3.0));

  // A slightly shifted boundary keeps both matches alive.
  LabelSequence shifted = expand_segments({{0, 0, 9}, {1, 9, 20}});
  CHECK(f1_at(shifted, gt, 0.5) == doctest::Approx(100.0));

  for (double th : {0.1, 0.25, 0.5, 1.0}) CHECK(f1_at(gt, gt, th) == doctest::Approx(100.0));

  CHECK_THROWS_AS(f1_at(gt, gt, 0.0), parameter_error);
  CHECK_THROWS_AS(f1_at(gt, gt, 1.5), parameter_error);
  CHECK_THROWS_AS(f1_at({0, 1}, {0}, 0.5), dimension_error);
}

TEST_CASE("F1 is non-increasing in the IoU threshold") {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 60; ++i) {
    LabelSequence gt = random_labels(6, 3, rng);
    LabelSequence pred = perturb(gt, 3, rng);
    double prev = 101.0;
    for (double th : {0.1, 0.25, 0.5, 0.75, 1.0}) {
      const double cur = f1_at(pred, gt, th);
      CHECK(cur <= prev + 1e-9);
      CHECK(cur >= 0.0);
      CHECK(cur <= 100.0);
      prev = cur;
    }
  }
}

TEST_CASE("greedy matching agrees with the exhaustive oracle") {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 300; ++i) {
    LabelSequence gt = random_labels(6, 3, rng);
    LabelSequence pred = (i % 3 == 0) ? random_labels(6, 3, rng) : perturb(gt, 3, rng);
    pred.resize(gt.size(), gt.back());
    for (double th : {0.1, 0.25, 0.5}) {
      CHECK(f1_at(pred, gt, th) == doctest::Approx(testsupport::f1_oracle(pred, gt, th)));
    }
  }
}

TEST_CASE("edit score on transcript-level cases") {
  LabelSequence gt = expand_segments({{0, 0, 3}, {1, 3, 6}, {2, 6, 9}, {3, 9, 12}});
  CHECK(edit_score(gt, gt) == 100.0);

  // Transcript A,B,X,C,D against A,B,C,D: one insertion over max length 5.
  LabelSequence pred =
      expand_segments({{0, 0, 3}, {1, 3, 6}, {7, 6, 7}, {2, 7, 9}, {3, 9, 12}});
  CHECK(edit_score(pred, gt) == doctest::Approx(80.0));

  // Fully disjoint equal-length transcripts need |transcript| substitutions.
  LabelSequence a = expand_segments({{0, 0, 2}, {1, 2, 4}, {2, 4, 6}});
  LabelSequence b = expand_segments({{3, 0, 2}, {4, 2, 4}, {5, 4, 6}});
  CHECK(edit_score(a, b) == 0.0);
}

TEST_CASE("levenshtein distance against the full-matrix oracle") {
  CHECK(levenshtein_distance({}, {}) == 0);
  CHECK(levenshtein_distance({1, 2, 3}, {}) == 3);
  CHECK(levenshtein_distance({1, 2, 3}, {1, 3}) == 1);
  CHECK(levenshtein_distance({1, 2, 3}, {4, 5, 6}) == 3);

  std::mt19937_64 rng(34);
  std::uniform_int_distribution<std::size_t> len(0, 9), sym(0, 3);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::size_t> a(len(rng)), b(len(rng));
    for (auto& v : a) v = sym(rng);
    for (auto& v : b) v = sym(rng);
    CHECK(levenshtein_distance(a, b) == testsupport::edit_distance_oracle(a, b));
  }

  std::mt19937_64 rng2(35);
  for (int i = 0; i < 100; ++i) {
    LabelSequence gt = random_labels(7, 4, rng2);
    LabelSequence pred = random_labels(7, 4, rng2);
    pred.resize(gt.size(), gt.back());
    CHECK(edit_score(pred, gt) == doctest::Approx(testsupport::edit_score_oracle(pred, gt)));
  }
}

TEST_CASE("metrics are invariant to uniform temporal upsampling") {
  std::mt19937_64 rng(36);
  for (int i = 0; i < 40; ++i) {
    LabelSequence gt = random_labels(5, 3, rng);
    LabelSequence pred = perturb(gt, 3, rng);
    LabelSequence gt3 = upsample(gt, 3), pred3 = upsample(pred, 3);
    CHECK(edit_score(pred, gt) == doctest::Approx(edit_score(pred3, gt3)));
    for (double th : {0.1, 0.25, 0.5})
      CHECK(f1_at(pred, gt, th) == doctest::Approx(f1_at(pred3, gt3, th)));
  }
}

TEST_CASE("corpus-level report pools counts and averages edit") {
  std::vector<LabelSequence> gts{expand_segments({{0, 0, 4}, {1, 4, 8}}),
                                 expand_segments({{2, 0, 6}})};
  MetricReport perfect = evaluate_many(gts, gts);
  CHECK(perfect.acc == doctest::Approx(100.0));
  CHECK(perfect.edit == doctest::Approx(100.0));
  for (int th : {10, 25, 50}) CHECK(perfect.f1.at(th) == doctest::Approx(100.0));

  // Pooling mixes the two videos: 8 of 14 frames match; segment counts pool
  // to tp=2 of 3 on both sides at every threshold here.
  std::vector<LabelSequence> preds{gts[0], expand_segments({{3, 0, 6}})};
  MetricReport mixed = evaluate_many(preds, gts);
  CHECK(mixed.acc == doctest::Approx(100.0 * 8.0 / 14.0));
  for (int th : {10, 25, 50}) CHECK(mixed.f1.at(th) == doctest::Approx(200.0 / 3.0));
  CHECK(mixed.edit == doctest::Approx(50.0));  // per-video 100 and 0, averaged

  CHECK_THROWS_AS(evaluate_many(preds, {gts[0]}), dimension_error);
  CHECK_THROWS_AS(evaluate_many({}, {}), dimension_error);
}

TEST_CASE("report formatting") {
  MetricReport r;
  r.acc = 92.15;
  r.f1[10] = 94.2;
  r.f1[25] = 94.0;
  r.f1[50] = 93.5;
  r.edit = 95.6;

  const std::string table = format_report_table(r);
  CHECK(table.find("92.15") != std::string::npos);
  CHECK(table.find("f1@50") != std::string::npos);

  const std::string records = format_report_records(r);
  CHECK(records.find("acc=92.150000") != std::string::npos);
  CHECK(records.find("f1@10=94.200000") != std::string::npos);
  CHECK(records.find("f1@25=94.000000") != std::string::npos);
  CHECK(records.find("f1@50=93.500000") != std::string::npos);
  CHECK(records.find("edit=95.600000") != std::string::npos);
}

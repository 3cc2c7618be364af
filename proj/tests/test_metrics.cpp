#include <doctest.h>

#include <cmath>

#include "fd/metrics.hpp"
#include "fd/prng.hpp"
#include "reference_metrics.hpp"

using namespace fd;

namespace {

EvalRecord rec(std::string id, std::vector<int> truth, std::vector<double> scores) {
  return EvalRecord{std::move(id), std::move(truth), std::move(scores)};
}

std::vector<EvalRecord> random_instance(Prng& rng) {
  const std::size_t videos = 1 + rng.below(10);
  const std::size_t classes = 2 + rng.below(7);  // up to 8
  std::vector<EvalRecord> out;
  for (std::size_t v = 0; v < videos; ++v) {
    EvalRecord r;
    r.video_id = "vid-" + std::to_string(v);
    for (std::size_t c = 0; c < classes; ++c) {
      r.scores.push_back(rng.uniform01());
      if (rng.uniform01() < 0.3) r.truth.push_back(static_cast<int>(c));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_CASE("gap hand-derived fixtures") {
  // 1 video, truth {0}, ranked pairs [(0,0.9 correct), (1,0.8 wrong)]
  CHECK(gap({rec("a", {0}, {0.9, 0.8})}, 20) == doctest::Approx(1.0));
  // ranked [correct, wrong, correct] with truth {0,1}:
  // 1*0.5 + 0 + (2/3)*0.5 = 0.8333...
  CHECK(gap({rec("a", {0, 2}, {0.9, 0.8, 0.7})}, 20) ==
        doctest::Approx(1.0 * 0.5 + (2.0 / 3.0) * 0.5));
  // perfect classifier: every truth ranked first
  CHECK(gap({rec("a", {0}, {0.9, 0.1, 0.1}), rec("b", {1}, {0.1, 0.9, 0.2})}, 20) ==
        doctest::Approx(1.0));
  // no ground truth anywhere: undefined, never silently 0
  CHECK_THROWS_AS(gap({rec("a", {}, {0.5, 0.5})}, 20), UndefinedMetricError);
}

TEST_CASE("gap respects the top_n truncation") {
  // Truth label scored last among 3 classes; with top_n=2 it is pushed out
  // of the pool but still counts in the recall denominator.
  auto records = {rec("a", {2}, {0.9, 0.8, 0.1})};
  CHECK(gap(records, 2) == doctest::Approx(0.0));
  CHECK(gap(records, 3) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("hit_at_t fixtures") {
  // one hit in top-1, one miss
  std::vector<EvalRecord> two = {rec("a", {0}, {0.9, 0.1}),
                                 rec("b", {0}, {0.1, 0.9})};
  CHECK(hit_at_t(two, 1) == doctest::Approx(0.5));
  // t = C covers all classes
  CHECK(hit_at_t(two, 2) == doctest::Approx(1.0));
  // empty-truth videos excluded from the denominator
  std::vector<EvalRecord> with_empty = {rec("a", {0}, {0.9, 0.1}),
                                        rec("b", {}, {0.9, 0.1})};
  CHECK(hit_at_t(with_empty, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(hit_at_t({rec("a", {}, {0.5})}, 1), UndefinedMetricError);
}

TEST_CASE("perr fixtures") {
  // truth {a,b}, top-2 = {a,c} -> 0.5
  CHECK(perr({rec("v", {0, 1}, {0.9, 0.1, 0.8})}) == doctest::Approx(0.5));
  // perfect ranking
  CHECK(perr({rec("v", {0, 1}, {0.9, 0.8, 0.1})}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(perr({rec("v", {}, {0.5})}), UndefinedMetricError);
}

TEST_CASE("map fixtures") {
  // one class, video ranking [pos, neg, pos]: AP = (1 + 2/3)/2
  std::vector<EvalRecord> recs = {rec("a", {0}, {0.9}), rec("b", {}, {0.8}),
                                  rec("c", {0}, {0.7})};
  CHECK(mean_average_precision(recs) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  // two classes with AP 1.0 and 0.5 -> mAP 0.75
  // class 0: ranking [a(pos), b] -> AP 1.0
  // class 1: ranking [a(neg), b(pos)] -> AP 0.5
  CHECK(mean_average_precision({rec("a", {0}, {0.9, 0.9}),
                                rec("b", {1}, {0.1, 0.8})}) ==
        doctest::Approx(0.75));
  // mixed four-video case, hand-walked:
  // class 0 ranking [a+, b, d, c] -> AP 1.0
  // class 1 ranking [b+, d, c+, a] -> AP (1 + 2/3)/2
  CHECK(mean_average_precision({rec("a", {0}, {0.9, 0.2}),
                                rec("b", {1}, {0.1, 0.9}),
                                rec("c", {1}, {0.0, 0.5}),
                                rec("d", {}, {0.05, 0.7})}) ==
        doctest::Approx(0.5 * (1.0 + 0.5 * (1.0 + 2.0 / 3.0))));
  CHECK_THROWS_AS(mean_average_precision({rec("a", {}, {0.5})}),
                  UndefinedMetricError);
}

TEST_CASE("perfect and adversarial extremes") {
  std::vector<EvalRecord> perfect = {rec("a", {0, 1}, {0.9, 0.8, 0.1, 0.0}),
                                     rec("b", {2}, {0.1, 0.0, 0.9, 0.2})};
  MetricReport rep = compute_report(perfect);
  CHECK(rep.gap == doctest::Approx(1.0));
  CHECK(rep.hit_at_1 == doctest::Approx(1.0));
  CHECK(rep.perr == doctest::Approx(1.0));
  CHECK(rep.map == doctest::Approx(1.0));

  // adversarial: truth classes scored 0
  std::vector<EvalRecord> bad = {rec("a", {0}, {0.0, 0.9, 0.8}),
                                 rec("b", {1}, {0.9, 0.0, 0.8})};
  CHECK(hit_at_t(bad, 1) == doctest::Approx(0.0));
  CHECK(perr(bad) == doctest::Approx(0.0));
}

TEST_CASE("metrics depend only on the score ordering") {
  Prng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    auto records = random_instance(rng);
    bool has_truth = false;
    for (const auto& r : records) has_truth |= !r.truth.empty();
    if (!has_truth) continue;
    const double g0 = gap(records, 20);
    const double h0 = hit_at_t(records, 1);
    const double p0 = perr(records);
    const double m0 = mean_average_precision(records);
    for (int variant = 0; variant < 2; ++variant) {
      auto transformed = records;
      for (auto& r : transformed)
        for (auto& s : r.scores)
          s = variant == 0 ? 2.0 * s + 1.0 : 1.0 / (1.0 + std::exp(-s));
      CHECK(gap(transformed, 20) == g0);
      CHECK(hit_at_t(transformed, 1) == h0);
      CHECK(perr(transformed) == p0);
      CHECK(mean_average_precision(transformed) == m0);
    }
  }
}

TEST_CASE("library metrics equal brute-force references on 200 random instances") {
  Prng rng(909090);
  int checked = 0;
  while (checked < 200) {
    auto records = random_instance(rng);
    bool has_truth = false;
    for (const auto& r : records) has_truth |= !r.truth.empty();
    if (!has_truth) continue;
    ++checked;
    REQUIRE(gap(records, 20) == fdref::gap_reference(records, 20));
    REQUIRE(hit_at_t(records, 1) == fdref::hit_at_t_reference(records, 1));
    REQUIRE(perr(records) == fdref::perr_reference(records));
    REQUIRE(mean_average_precision(records) == fdref::map_reference(records));
  }
}

TEST_CASE("metric range invariant") {
  Prng rng(606);
  for (int trial = 0; trial < 50; ++trial) {
    auto records = random_instance(rng);
    bool has_truth = false;
    for (const auto& r : records) has_truth |= !r.truth.empty();
    if (!has_truth) continue;
    for (double v : {gap(records, 20), hit_at_t(records, 1), perr(records),
                     mean_average_precision(records)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(gap({rec("a", {5}, {0.5, 0.5})}, 20), BoundsError);
  CHECK_THROWS_AS(gap({rec("a", {0}, {std::nan("")})}, 20), NumericError);
}

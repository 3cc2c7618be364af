#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fd/error.hpp"

namespace fd {

// Per-video input to every metric: ground-truth class set (may be empty)
// and one score per class. Scores only ever enter through their ordering,
// so any finite real values are acceptable.
struct EvalRecord {
  std::string video_id;
  std::vector<int> truth;
  std::vector<double> scores;
};

struct MetricReport {
  double gap = 0.0;
  double hit_at_1 = 0.0;
  double perr = 0.0;
  double map = 0.0;
  std::size_t videos = 0;
  std::size_t predictions = 0;  // pooled label/confidence pairs entering GAP
};

// Global average precision over the pooled, score-sorted top-n predictions
// of all videos. Ties break by ascending video_id, then ascending class.
// The recall denominator counts every ground-truth label of the pooled
// videos, including labels pushed out of a video's top-n.
double gap(const std::vector<EvalRecord>& records, std::size_t top_n = 20);

// Fraction of videos with at least one true label among the top-t classes
// (score descending, ties by ascending class). Videos with empty truth are
// excluded from the denominator.
double hit_at_t(const std::vector<EvalRecord>& records, std::size_t t);

// Precision of the top-L classes where L = |truth|, averaged over videos
// with L > 0.
double perr(const std::vector<EvalRecord>& records);

// Unweighted mean over classes (with at least one positive) of
// non-interpolated average precision; videos ranked per class by score
// descending, ties by ascending video_id.
double mean_average_precision(const std::vector<EvalRecord>& records);

MetricReport compute_report(const std::vector<EvalRecord>& records,
                            std::size_t top_n = 20);

// Classes of one record ranked by (score descending, class ascending),
// truncated to n. Shared by the metrics and the predictions-file writer so
// the two can never disagree.
std::vector<int> top_classes(const EvalRecord& record, std::size_t n);

}  // namespace fd

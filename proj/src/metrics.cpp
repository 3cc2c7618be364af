#include "fd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fd {

namespace {

void validate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw UndefinedMetricError("metrics: no records");
  for (const auto& r : records) {
    for (double s : r.scores)
      if (!std::isfinite(s))
        throw NumericError("metrics: non-finite score for video '" + r.video_id + "'");
    for (int c : r.truth)
      if (c < 0 || static_cast<std::size_t>(c) >= r.scores.size())
        throw BoundsError("metrics: truth class " + std::to_string(c) +
                          " outside [0," + std::to_string(r.scores.size()) +
                          ") for video '" + r.video_id + "'");
  }
}

bool is_truth(const EvalRecord& r, int c) {
  return std::find(r.truth.begin(), r.truth.end(), c) != r.truth.end();
}

}  // namespace

std::vector<int> top_classes(const EvalRecord& record, std::size_t n) {
  std::vector<int> order(record.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (record.scores[a] != record.scores[b])
      return record.scores[a] > record.scores[b];
    return a < b;
  });
  if (order.size() > n) order.resize(n);
  return order;
}

double gap(const std::vector<EvalRecord>& records, std::size_t top_n) {
  validate(records);
  struct Pred {
    const EvalRecord* rec;
    int cls;
    double score;
    bool correct;
  };
  std::vector<Pred> pool;
  std::size_t total_truth = 0;
  for (const auto& r : records) {
    total_truth += r.truth.size();
    for (int c : top_classes(r, top_n))
      pool.push_back(Pred{&r, c, r.scores[static_cast<std::size_t>(c)], is_truth(r, c)});
  }
  if (total_truth == 0)
    throw UndefinedMetricError("gap: no ground-truth labels in pooled videos");
  std::sort(pool.begin(), pool.end(), [](const Pred& a, const Pred& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.rec->video_id != b.rec->video_id) return a.rec->video_id < b.rec->video_id;
    return a.cls < b.cls;
  });
  double sum = 0.0;
  std::size_t correct_so_far = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].correct) continue;
    ++correct_so_far;
    const double precision =
        static_cast<double>(correct_so_far) / static_cast<double>(i + 1);
    sum += precision / static_cast<double>(total_truth);
  }
  return sum;
}

double hit_at_t(const std::vector<EvalRecord>& records, std::size_t t) {
  validate(records);
  if (t < 1) throw ConfigError("hit_at_t: t must be >= 1");
  std::size_t hits = 0, counted = 0;
  for (const auto& r : records) {
    if (r.truth.empty()) continue;
    ++counted;
    for (int c : top_classes(r, t)) {
      if (is_truth(r, c)) {
        ++hits;
        break;
      }
    }
  }
  if (counted == 0)
    throw UndefinedMetricError("hit_at_t: every video has empty ground truth");
  return static_cast<double>(hits) / static_cast<double>(counted);
}

double perr(const std::vector<EvalRecord>& records) {
  validate(records);
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& r : records) {
    const std::size_t L = r.truth.size();
    if (L == 0) continue;
    ++counted;
    std::size_t correct = 0;
    for (int c : top_classes(r, L))
      if (is_truth(r, c)) ++correct;
    sum += static_cast<double>(correct) / static_cast<double>(L);
  }
  if (counted == 0)
    throw UndefinedMetricError("perr: every video has empty ground truth");
  return sum / static_cast<double>(counted);
}

double mean_average_precision(const std::vector<EvalRecord>& records) {
  validate(records);
  const std::size_t num_classes = records.front().scores.size();
  for (const auto& r : records)
    if (r.scores.size() != num_classes)
      throw ShapeError("map: inconsistent class count across records");

  std::vector<std::size_t> order(records.size());
  double ap_sum = 0.0;
  std::size_t classes_with_positives = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (records[a].scores[c] != records[b].scores[c])
        return records[a].scores[c] > records[b].scores[c];
      return records[a].video_id < records[b].video_id;
    });
    std::size_t positives = 0;
    for (const auto& r : records)
      if (is_truth(r, static_cast<int>(c))) ++positives;
    if (positives == 0) continue;
    ++classes_with_positives;
    double ap = 0.0;
    std::size_t correct_so_far = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (!is_truth(records[order[i]], static_cast<int>(c))) continue;
      ++correct_so_far;
      ap += static_cast<double>(correct_so_far) / static_cast<double>(i + 1);
    }
    ap_sum += ap / static_cast<double>(positives);
  }
  if (classes_with_positives == 0)
    throw UndefinedMetricError("map: no class has a positive example");
  return ap_sum / static_cast<double>(classes_with_positives);
}

MetricReport compute_report(const std::vector<EvalRecord>& records,
                            std::size_t top_n) {
  MetricReport rep;
  rep.gap = gap(records, top_n);
  rep.hit_at_1 = hit_at_t(records, 1);
  rep.perr = perr(records);
  rep.map = mean_average_precision(records);
  rep.videos = records.size();
  for (const auto& r : records) rep.predictions += std::min(top_n, r.scores.size());
  return rep;
}

}  // namespace fd

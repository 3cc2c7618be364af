#include "reference_metrics.hpp"

#include <algorithm>
#include <tuple>

namespace fdref {

using fd::EvalRecord;

namespace {

bool truth_contains(const EvalRecord& r, int c) {
  for (int t : r.truth)
    if (t == c) return true;
  return false;
}

// All classes of one record ordered by score descending, class ascending
// on ties. Selection-sort style to stay independent of the library path.
std::vector<int> ranked_classes(const EvalRecord& r) {
  std::vector<int> remaining;
  for (std::size_t c = 0; c < r.scores.size(); ++c) remaining.push_back(static_cast<int>(c));
  std::vector<int> out;
  while (!remaining.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < remaining.size(); ++i) {
      const double si = r.scores[static_cast<std::size_t>(remaining[i])];
      const double sb = r.scores[static_cast<std::size_t>(remaining[best])];
      if (si > sb || (si == sb && remaining[i] < remaining[best])) best = i;
    }
    out.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<long>(best));
  }
  return out;
}

}  // namespace

double gap_reference(const std::vector<EvalRecord>& records, std::size_t top_n) {
  // (video index, class, score, correct)
  struct Entry {
    std::size_t rec;
    int cls;
    double score;
    bool correct;
  };
  std::vector<Entry> pool;
  std::size_t total_truth = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    total_truth += records[i].truth.size();
    auto ranked = ranked_classes(records[i]);
    if (ranked.size() > top_n) ranked.resize(top_n);
    for (int c : ranked)
      pool.push_back(Entry{i, c, records[i].scores[static_cast<std::size_t>(c)],
                           truth_contains(records[i], c)});
  }
  if (total_truth == 0) throw fd::UndefinedMetricError("gap_reference: no truth");
  std::stable_sort(pool.begin(), pool.end(), [&](const Entry& a, const Entry& b) {
    return std::make_tuple(-a.score, records[a.rec].video_id, a.cls) <
           std::make_tuple(-b.score, records[b.rec].video_id, b.cls);
  });
  double gap = 0.0;
  double correct = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].correct) {
      correct += 1.0;
      const double precision = correct / static_cast<double>(i + 1);
      gap += precision / static_cast<double>(total_truth);  // p(i) * (1/R)
    }
  }
  return gap;
}

double hit_at_t_reference(const std::vector<EvalRecord>& records, std::size_t t) {
  std::size_t hits = 0, total = 0;
  for (const auto& r : records) {
    if (r.truth.empty()) continue;
    ++total;
    auto ranked = ranked_classes(r);
    if (ranked.size() > t) ranked.resize(t);
    bool hit = false;
    for (int c : ranked)
      if (truth_contains(r, c)) hit = true;
    if (hit) ++hits;
  }
  if (total == 0) throw fd::UndefinedMetricError("hit_reference: no truth");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double perr_reference(const std::vector<EvalRecord>& records) {
  double sum = 0.0;
  std::size_t total = 0;
  for (const auto& r : records) {
    if (r.truth.empty()) continue;
    ++total;
    auto ranked = ranked_classes(r);
    ranked.resize(std::min(ranked.size(), r.truth.size()));
    std::size_t correct = 0;
    for (int c : ranked)
      if (truth_contains(r, c)) ++correct;
    sum += static_cast<double>(correct) / static_cast<double>(r.truth.size());
  }
  if (total == 0) throw fd::UndefinedMetricError("perr_reference: no truth");
  return sum / static_cast<double>(total);
}

double map_reference(const std::vector<EvalRecord>& records) {
  const std::size_t num_classes = records.front().scores.size();
  double ap_sum = 0.0;
  std::size_t used_classes = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    // Order videos by score for class c, descending; ties by video_id.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < records.size(); ++i) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::make_tuple(-records[a].scores[c], records[a].video_id) <
             std::make_tuple(-records[b].scores[c], records[b].video_id);
    });
    std::size_t positives = 0;
    for (const auto& r : records)
      if (truth_contains(r, static_cast<int>(c))) ++positives;
    if (positives == 0) continue;
    ++used_classes;
    double ap = 0.0;
    double hit = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (truth_contains(records[order[rank]], static_cast<int>(c))) {
        hit += 1.0;
        ap += hit / static_cast<double>(rank + 1);
      }
    }
    ap_sum += ap / static_cast<double>(positives);
  }
  if (used_classes == 0) throw fd::UndefinedMetricError("map_reference: no positives");
  return ap_sum / static_cast<double>(used_classes);
}

}  // namespace fdref

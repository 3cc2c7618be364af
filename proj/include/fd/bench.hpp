#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fd/data.hpp"
#include "fd/trainer.hpp"

namespace fd {

// Inference-cost comparison of trained (or freshly initialized) artifacts.
// Wall-clock covers the full evaluation pipeline per repeat: frame
// selection, batch packing, the forward pass and score extraction; the
// warm-up pass and metric computation are excluded. Step counts are exact,
// itemized so the source of any speedup is auditable (lower-level frame
// recurrences, upper-level block recurrences, head calls).
struct BenchVariant {
  std::string name;      // display name from the checkpoint's config
  std::string checkpoint;
  double median_seconds = 0.0;
  std::vector<double> repeat_seconds;
  StepCounters counters;
  double relative_time = 0.0;  // vs the Teacher-Full entry
};

struct BenchReport {
  nlohmann::json configs;  // config echo per variant
  std::vector<BenchVariant> variants;
  std::size_t repeats = 0;
  std::string baseline;  // name of the reference variant
};

BenchReport run_bench(const std::vector<std::string>& checkpoint_paths,
                      const Dataset& data, std::size_t repeats);

nlohmann::json bench_to_json(const BenchReport& report);

}  // namespace fd

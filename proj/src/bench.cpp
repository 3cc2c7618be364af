#include "fd/bench.hpp"

#include <algorithm>
#include <chrono>

#include "fd/experiment.hpp"

namespace fd {

using nlohmann::json;

BenchReport run_bench(const std::vector<std::string>& checkpoint_paths,
                      const Dataset& data, std::size_t repeats) {
  if (checkpoint_paths.empty()) throw ConfigError("bench: no checkpoints given");
  if (repeats < 1) repeats = 1;

  BenchReport report;
  report.repeats = repeats;
  report.configs = json::object();

  for (const auto& path : checkpoint_paths) {
    Checkpoint ckpt = load_checkpoint(path);
    RunConfig cfg = RunConfig::from_json(ckpt.config);
    BenchVariant entry;
    entry.checkpoint = path;
    entry.name = model_display_name(cfg.variant, cfg.sampler.percent);
    report.configs[entry.name] = ckpt.config;

    const PredictPath ppath = deployment_path(cfg);
    predict(cfg, ckpt.params, data, ppath, &entry.counters);  // warm-up + counters
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      auto records = predict(cfg, ckpt.params, data, ppath);
      const auto t1 = std::chrono::steady_clock::now();
      if (records.size() != data.size())
        throw ShapeError("bench: prediction count mismatch");
      entry.repeat_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::vector<double> sorted = entry.repeat_seconds;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    entry.median_seconds =
        n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    report.variants.push_back(std::move(entry));
  }

  // Teacher-Full is the reference when present; otherwise the first entry.
  std::size_t base = 0;
  for (std::size_t i = 0; i < report.variants.size(); ++i)
    if (report.variants[i].name == "Teacher-Full") base = i;
  report.baseline = report.variants[base].name;
  const double base_time = report.variants[base].median_seconds;
  for (auto& v : report.variants)
    v.relative_time = base_time > 0 ? v.median_seconds / base_time : 0.0;
  return report;
}

json bench_to_json(const BenchReport& report) {
  json variants = json::array();
  for (const auto& v : report.variants) {
    variants.push_back(json{{"name", v.name},
                            {"checkpoint", v.checkpoint},
                            {"median_seconds", v.median_seconds},
                            {"repeat_seconds", v.repeat_seconds},
                            {"relative_time", v.relative_time},
                            {"lower_level_steps", v.counters.lower_steps},
                            {"upper_level_steps", v.counters.upper_steps},
                            {"videos", v.counters.videos}});
  }
  return json{{"config", report.configs},
              {"baseline", report.baseline},
              {"repeats", report.repeats},
              {"variants", variants}};
}

}  // namespace fd

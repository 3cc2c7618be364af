#include "fd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "fd/trainer.hpp"

namespace fd {

using nlohmann::json;

std::string model_display_name(Variant variant, int k) {
  switch (variant) {
    case Variant::TeacherOnly: return "Teacher-Full";
    case Variant::UniformBaseline: return "Uniform-" + std::to_string(k);
    case Variant::RandomBaseline: return "Random-" + std::to_string(k);
    case Variant::StudentFinal: return "Student-Final-" + std::to_string(k);
    case Variant::StudentIntermediate: return "Student-Inter-" + std::to_string(k);
  }
  return "?";
}

GridSpec GridSpec::from_json(const json& j) {
  reject_unknown_fields(j, {"data", "base", "cells", "seeds", "jobs"}, "grid");
  GridSpec spec;
  if (!j.contains("data"))
    throw ConfigError("grid.data with train/eval paths is required");
  reject_unknown_fields(j.at("data"), {"train", "eval"}, "grid.data");
  spec.train_path = j.at("data").at("train").get<std::string>();
  spec.eval_path = j.at("data").at("eval").get<std::string>();
  if (j.contains("base")) spec.base = j.at("base");
  if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (spec.seeds.empty()) throw ConfigError("grid.seeds must not be empty");
  if (j.contains("jobs")) spec.jobs = j.at("jobs").get<std::size_t>();
  if (!j.contains("cells") || !j.at("cells").is_array() || j.at("cells").empty())
    throw ConfigError("grid.cells must be a non-empty array");
  for (const auto& c : j.at("cells")) {
    reject_unknown_fields(c, {"variant", "k"}, "grid.cells[]");
    GridCell cell;
    cell.variant = variant_from_name(c.at("variant").get<std::string>());
    if (c.contains("k")) cell.k = c.at("k").get<int>();
    if (cell.variant == Variant::TeacherOnly) cell.k = 100;
    if (cell.k < 1 || cell.k > 100)
      throw ConfigError("grid cell k must be in [1,100]");
    spec.cells.push_back(cell);
  }
  return spec;
}

GridSpec GridSpec::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open grid file: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("bad grid JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json GridSpec::to_json() const {
  json cell_list = json::array();
  for (const auto& c : cells)
    cell_list.push_back(json{{"variant", variant_name(c.variant)}, {"k", c.k}});
  return json{{"data", {{"train", train_path}, {"eval", eval_path}}},
              {"base", base},
              {"cells", cell_list},
              {"seeds", seeds},
              {"jobs", jobs}};
}

RunConfig GridSpec::cell_config(const GridCell& cell, std::uint64_t seed) const {
  json merged = base.is_null() ? json::object() : base;
  if (merged.contains("sampler"))
    throw ConfigError("grid.base must not set sampler (cells define it)");
  if (merged.contains("data"))
    throw ConfigError("grid.base must not set data (grid.data defines it)");
  if (merged.contains("train") && merged.at("train").contains("variant"))
    throw ConfigError("grid.base must not set train.variant (cells define it)");
  merged["data"] = {{"train", train_path}, {"eval", eval_path}};
  if (!merged.contains("train")) merged["train"] = json::object();
  merged["train"]["variant"] = variant_name(cell.variant);
  merged["train"]["seed"] = seed;
  json sampler;
  switch (cell.variant) {
    case Variant::TeacherOnly: sampler = {{"kind", "full"}, {"k", 100}}; break;
    case Variant::RandomBaseline: sampler = {{"kind", "random"}, {"k", cell.k}}; break;
    default: sampler = {{"kind", "uniform"}, {"k", cell.k}}; break;
  }
  // every seed gets its own random-sampler stream
  sampler["seed"] = derive_seed(seed, "sampler");
  merged["sampler"] = std::move(sampler);
  return RunConfig::from_json(merged);
}

std::optional<double> GridResult::mean_gap(const std::string& model) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs) {
    if (r.model != model || r.failed) continue;
    sum += r.metrics.gap;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

GridResult run_grid(const GridSpec& spec, const Dataset& train, const Dataset& eval,
                    const std::function<void(const CellRun&)>& on_run) {
  struct Job {
    GridCell cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& cell : spec.cells)
    for (std::uint64_t seed : spec.seeds) jobs.push_back(Job{cell, seed});

  GridResult result;
  result.spec_echo = spec.to_json();
  result.runs.resize(jobs.size());

  std::size_t workers = spec.jobs ? spec.jobs : std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = std::min(workers, jobs.size());

  std::atomic<std::size_t> next{0};
  std::mutex sink_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      CellRun run;
      run.variant = job.cell.variant;
      run.k = job.cell.k;
      run.seed = job.seed;
      run.model = model_display_name(job.cell.variant, job.cell.k);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        // per-epoch eval is experiment overhead; the grid evaluates once
        RunConfig quiet = spec.cell_config(job.cell, job.seed);
        quiet.eval_every_epoch = false;
        Trainer trainer(quiet, &train, &eval);
        TrainResult tr = trainer.run();
        if (tr.aborted) {
          run.failed = true;
          run.error = "training aborted: " + tr.abort_reason;
        } else {
          auto records =
              predict(quiet, tr.checkpoint.params, eval, deployment_path(quiet));
          run.metrics = compute_report(records, quiet.top_n);
        }
      } catch (const Error& e) {
        run.failed = true;
        run.error = e.what();
      }
      run.train_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.runs[i] = run;
      if (on_run) {
        std::lock_guard<std::mutex> lock(sink_mutex);
        on_run(run);
      }
    }
  };

  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return result;
}

namespace {

struct Stats {
  double mean = 0.0, sd = 0.0;
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

int variant_rank(Variant v) {
  switch (v) {
    case Variant::TeacherOnly: return 0;
    case Variant::UniformBaseline: return 1;
    case Variant::RandomBaseline: return 2;
    case Variant::StudentFinal: return 3;
    case Variant::StudentIntermediate: return 4;
  }
  return 5;
}

}  // namespace

void write_grid_csv(const std::filesystem::path& path, const GridResult& result) {
  // group by display name
  std::map<std::pair<int, int>, std::pair<std::string, std::vector<const CellRun*>>>
      groups;  // (variant rank, -k) -> (model, runs)
  for (const auto& r : result.runs) {
    auto key = std::make_pair(variant_rank(r.variant), -r.k);
    auto& slot = groups[key];
    slot.first = r.model;
    slot.second.push_back(&r);
  }
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open csv for writing: " + path.string());
  os << "model,k,seeds,failed,hit1_mean,hit1_sd,perr_mean,perr_sd,map_mean,map_sd,"
        "gap_mean,gap_sd\n";
  os.precision(6);
  os << std::fixed;
  for (const auto& [key, slot] : groups) {
    const auto& runs = slot.second;
    std::vector<double> hit1, perr_v, map_v, gap_v;
    std::size_t failed = 0;
    for (const auto* r : runs) {
      if (r->failed) {
        ++failed;
        continue;
      }
      hit1.push_back(r->metrics.hit_at_1);
      perr_v.push_back(r->metrics.perr);
      map_v.push_back(r->metrics.map);
      gap_v.push_back(r->metrics.gap);
    }
    const Stats h = stats_of(hit1), p = stats_of(perr_v), m = stats_of(map_v),
                g = stats_of(gap_v);
    os << slot.first << "," << -key.second << "," << runs.size() << "," << failed
       << "," << h.mean << "," << h.sd << "," << p.mean << "," << p.sd << ","
       << m.mean << "," << m.sd << "," << g.mean << "," << g.sd << "\n";
  }
}

json grid_to_json(const GridResult& result) {
  json runs = json::array();
  for (const auto& r : result.runs) {
    json rr{{"model", r.model},
            {"variant", variant_name(r.variant)},
            {"k", r.k},
            {"seed", r.seed},
            {"failed", r.failed},
            {"train_seconds", r.train_seconds}};
    if (r.failed) {
      rr["error"] = r.error;
    } else {
      rr["metrics"] = {{"gap", r.metrics.gap},
                       {"hit_at_1", r.metrics.hit_at_1},
                       {"perr", r.metrics.perr},
                       {"map", r.metrics.map},
                       {"videos", r.metrics.videos},
                       {"predictions", r.metrics.predictions}};
    }
    runs.push_back(std::move(rr));
  }
  return json{{"config", result.spec_echo}, {"runs", runs}};
}

}  // namespace fd

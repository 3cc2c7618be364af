#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fd/config.hpp"
#include "fd/data.hpp"
#include "fd/metrics.hpp"

namespace fd {

// Human-facing row label matching the result-table convention:
// Teacher-Full, Uniform-k, Random-k, Student-Final-k, Student-Inter-k.
std::string model_display_name(Variant variant, int k);

struct GridCell {
  Variant variant = Variant::TeacherOnly;
  int k = 100;  // percent of frames for the sampled network; 100 for teacher
};

// Grid file schema:
// {
//   "data": {"train": path, "eval": path},
//   "base": { RunConfig overrides except data/variant/sampler },
//   "cells": [{"variant": name, "k": int?}, ...],
//   "seeds": [u64, ...],
//   "jobs": int
// }
struct GridSpec {
  std::string train_path, eval_path;
  nlohmann::json base;  // partial RunConfig
  std::vector<GridCell> cells;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t jobs = 0;  // 0 = hardware concurrency

  static GridSpec from_json(const nlohmann::json& j);
  static GridSpec from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // The fully resolved RunConfig of one cell x seed.
  RunConfig cell_config(const GridCell& cell, std::uint64_t seed) const;
};

struct CellRun {
  std::string model;  // display name
  Variant variant;
  int k = 100;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  MetricReport metrics;
  double train_seconds = 0.0;
};

struct GridResult {
  nlohmann::json spec_echo;
  std::vector<CellRun> runs;

  bool any_failed() const {
    for (const auto& r : runs)
      if (r.failed) return true;
    return false;
  }
  // mean metric over the seeds of one display-named model
  std::optional<double> mean_gap(const std::string& model) const;
};

// Runs every cell x seed, `jobs` runs in parallel (each run is internally
// single-threaded, so per-run results are independent of jobs). Failures
// are recorded and the grid continues.
GridResult run_grid(const GridSpec& spec, const Dataset& train, const Dataset& eval,
                    const std::function<void(const CellRun&)>& on_run = nullptr);

// Aggregated mean +- sd table in the result-table row order (header line,
// Teacher-Full, then each variant by descending k).
void write_grid_csv(const std::filesystem::path& path, const GridResult& result);
nlohmann::json grid_to_json(const GridResult& result);

}  // namespace fd

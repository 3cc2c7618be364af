#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fd/data.hpp"
#include "fd/metrics.hpp"

namespace fd {

// Predictions file: JSON Lines. The first line embeds the resolved run
// config ({"config": ...}); every following line is one video:
//   {"video_id": str, "top_k": [[class, score] x min(top_n, C)]}
// ordered by score descending, class ascending on ties.
void write_predictions(const std::filesystem::path& path,
                       const std::vector<EvalRecord>& records, std::size_t top_n,
                       const nlohmann::json& config_echo);

struct PredictionsFile {
  nlohmann::json config;
  struct Row {
    std::string video_id;
    std::vector<std::pair<int, double>> top_k;
  };
  std::vector<Row> rows;
};

PredictionsFile read_predictions(const std::filesystem::path& path);

// Joins predictions with ground truth to rebuild EvalRecords. Classes
// truncated out of a row's top_k (only possible when C > top_n) get a
// score below every real one.
std::vector<EvalRecord> records_from_predictions(const PredictionsFile& preds,
                                                 const Dataset& truth,
                                                 std::size_t num_classes);

}  // namespace fd

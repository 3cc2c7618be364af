#include "fd/predictions.hpp"

#include <fstream>
#include <unordered_map>

namespace fd {

using nlohmann::json;

void write_predictions(const std::filesystem::path& path,
                       const std::vector<EvalRecord>& records, std::size_t top_n,
                       const nlohmann::json& config_echo) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open predictions file for writing: " + path.string());
  os << json{{"config", config_echo}}.dump() << "\n";
  for (const auto& rec : records) {
    json row;
    row["video_id"] = rec.video_id;
    json top = json::array();
    for (int c : top_classes(rec, std::min(top_n, rec.scores.size())))
      top.push_back(json::array({c, rec.scores[static_cast<std::size_t>(c)]}));
    row["top_k"] = std::move(top);
    os << row.dump() << "\n";
  }
  if (!os) throw ParseError("predictions write failed: " + path.string());
}

PredictionsFile read_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open predictions file: " + path.string());
  PredictionsFile out;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad predictions line: ") + e.what(), line_no);
    }
    if (j.contains("config")) {
      out.config = j.at("config");
      continue;
    }
    try {
      PredictionsFile::Row row;
      row.video_id = j.at("video_id").get<std::string>();
      for (const auto& pair : j.at("top_k"))
        row.top_k.emplace_back(pair.at(0).get<int>(), pair.at(1).get<double>());
      out.rows.push_back(std::move(row));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad predictions record: ") + e.what(), line_no);
    }
  }
  return out;
}

std::vector<EvalRecord> records_from_predictions(const PredictionsFile& preds,
                                                 const Dataset& truth,
                                                 std::size_t num_classes) {
  std::unordered_map<std::string, const FrameSequence*> by_id;
  for (const auto& v : truth.videos) by_id.emplace(v.id, &v);
  std::vector<EvalRecord> out;
  out.reserve(preds.rows.size());
  for (const auto& row : preds.rows) {
    auto it = by_id.find(row.video_id);
    if (it == by_id.end())
      throw SchemaError("predictions refer to unknown video '" + row.video_id + "'");
    EvalRecord rec;
    rec.video_id = row.video_id;
    rec.truth = it->second->labels;
    rec.scores.assign(num_classes, -1e30);
    for (const auto& [cls, score] : row.top_k) {
      if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes)
        throw SchemaError("predictions class " + std::to_string(cls) +
                          " outside [0," + std::to_string(num_classes) + ")");
      rec.scores[static_cast<std::size_t>(cls)] = score;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace fd

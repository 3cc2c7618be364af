#include "fd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "fd/prng.hpp"

namespace fd {

using nlohmann::json;

std::size_t Dataset::inferred_classes() const {
  std::size_t c = num_classes;
  for (const auto& v : videos)
    for (int l : v.labels)
      if (static_cast<std::size_t>(l) + 1 > c) c = static_cast<std::size_t>(l) + 1;
  return c;
}

// ---- synthetic generation -------------------------------------------------

void SyntheticSpec::validate() const {
  if (classes < 2) throw ConfigError("synthetic spec: classes must be >= 2");
  if (feature_dim < 2) throw ConfigError("synthetic spec: feature_dim must be >= 2");
  if (min_frames < 1 || min_frames > max_frames)
    throw ConfigError("synthetic spec: need 1 <= min_frames <= max_frames");
  if (events_min < 1 || events_min > events_max)
    throw ConfigError("synthetic spec: need 1 <= events_min <= events_max");
  if (events_max > classes)
    throw ConfigError("synthetic spec: events_max exceeds class count");
  if (window_min < 1 || window_min > window_max)
    throw ConfigError("synthetic spec: need 1 <= window_min <= window_max");
  if (noise_sigma < 0) throw ConfigError("synthetic spec: noise_sigma must be >= 0");
  if (motif_scale <= 0) throw ConfigError("synthetic spec: motif_scale must be > 0");
}

std::vector<std::vector<float>> synthetic_motifs(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::vector<float>> motifs(spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Prng rng = substream(spec.seed, "motif/" + std::to_string(c));
    std::vector<float>& m = motifs[c];
    m.resize(spec.feature_dim);
    double norm_sq = 0.0;
    for (float& v : m) {
      v = static_cast<float>(rng.gaussian());
      norm_sq += static_cast<double>(v) * v;
    }
    const float scale = static_cast<float>(spec.motif_scale / std::sqrt(norm_sq));
    for (float& v : m) v *= scale;
  }
  return motifs;
}

Dataset generate_synthetic(const SyntheticSpec& spec, const std::string& split_tag) {
  spec.validate();
  const auto motifs = synthetic_motifs(spec);
  Dataset out;
  out.feature_dim = spec.feature_dim;
  out.num_classes = spec.classes;
  out.videos.reserve(spec.num_videos);

  for (std::size_t v = 0; v < spec.num_videos; ++v) {
    Prng rng = substream(spec.seed, split_tag + "/video/" + std::to_string(v));
    FrameSequence seq;
    {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s-%05zu", split_tag.c_str(), v);
      seq.id = buf;
    }
    seq.feature_dim = spec.feature_dim;
    seq.num_frames =
        spec.min_frames + rng.below(spec.max_frames - spec.min_frames + 1);
    seq.features.resize(seq.num_frames * spec.feature_dim);
    for (float& x : seq.features)
      x = static_cast<float>(rng.gaussian() * spec.noise_sigma);

    const std::size_t num_events =
        spec.events_min + rng.below(spec.events_max - spec.events_min + 1);
    // Distinct event classes via a partial shuffle of [0, C).
    std::vector<std::size_t> cls(spec.classes);
    std::iota(cls.begin(), cls.end(), 0);
    for (std::size_t i = 0; i < num_events; ++i) {
      const std::size_t j = i + rng.below(spec.classes - i);
      std::swap(cls[i], cls[j]);
    }
    std::set<int> labels;
    for (std::size_t e = 0; e < num_events; ++e) {
      const std::size_t c = cls[e];
      std::size_t len = spec.window_min + rng.below(spec.window_max - spec.window_min + 1);
      if (len > seq.num_frames) len = seq.num_frames;
      const std::size_t start = rng.below(seq.num_frames - len + 1);
      for (std::size_t t = start; t < start + len; ++t) {
        float* f = seq.features.data() + t * spec.feature_dim;
        for (std::size_t d = 0; d < spec.feature_dim; ++d) f[d] += motifs[c][d];
      }
      labels.insert(static_cast<int>(c));
    }
    seq.labels.assign(labels.begin(), labels.end());
    out.videos.push_back(std::move(seq));
  }
  return out;
}

GenSpec GenSpec::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("gen spec must be a JSON object");
  static const std::set<std::string> allowed = {
      "num_videos_train", "num_videos_eval", "classes", "feature_dim",
      "min_frames",       "max_frames",      "noise_sigma", "motif_scale",
      "events_min",       "events_max",      "window_min",  "window_max",
      "seed"};
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown gen spec field '" + key + "'");
  GenSpec g;
  auto grab = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  grab("num_videos_train", g.num_videos_train);
  grab("num_videos_eval", g.num_videos_eval);
  grab("classes", g.base.classes);
  grab("feature_dim", g.base.feature_dim);
  grab("min_frames", g.base.min_frames);
  grab("max_frames", g.base.max_frames);
  grab("noise_sigma", g.base.noise_sigma);
  grab("motif_scale", g.base.motif_scale);
  grab("events_min", g.base.events_min);
  grab("events_max", g.base.events_max);
  grab("window_min", g.base.window_min);
  grab("window_max", g.base.window_max);
  grab("seed", g.base.seed);
  g.base.validate();
  return g;
}

GenSpec GenSpec::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open gen spec: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("bad gen spec JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json GenSpec::to_json() const {
  return json{{"num_videos_train", num_videos_train},
              {"num_videos_eval", num_videos_eval},
              {"classes", base.classes},
              {"feature_dim", base.feature_dim},
              {"min_frames", base.min_frames},
              {"max_frames", base.max_frames},
              {"noise_sigma", base.noise_sigma},
              {"motif_scale", base.motif_scale},
              {"events_min", base.events_min},
              {"events_max", base.events_max},
              {"window_min", base.window_min},
              {"window_max", base.window_max},
              {"seed", base.seed}};
}

double motif_oracle_hit1(const Dataset& data,
                         const std::vector<std::vector<float>>& motifs,
                         std::size_t stride) {
  if (stride == 0) throw ConfigError("motif_oracle_hit1: stride must be >= 1");
  std::size_t hits = 0, counted = 0;
  for (const auto& video : data.videos) {
    if (video.labels.empty()) continue;
    ++counted;
    int best = -1;
    double best_score = -1e300;
    for (std::size_t c = 0; c < motifs.size(); ++c) {
      double norm_sq = 0.0;
      for (float m : motifs[c]) norm_sq += static_cast<double>(m) * m;
      double score = -1e300;
      for (std::size_t t = 0; t < video.num_frames; t += stride) {
        const auto f = video.frame(t);
        double dot = 0.0;
        for (std::size_t d = 0; d < f.size(); ++d)
          dot += static_cast<double>(f[d]) * motifs[c][d];
        score = std::max(score, dot / norm_sq);
      }
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    if (std::find(video.labels.begin(), video.labels.end(), best) !=
        video.labels.end())
      ++hits;
  }
  if (counted == 0) throw UndefinedMetricError("motif_oracle_hit1: no labeled videos");
  return static_cast<double>(hits) / static_cast<double>(counted);
}

// ---- file formats ----------------------------------------------------------

namespace {

constexpr char kBinaryMagic[4] = {'F', 'D', 'V', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("unexpected end of binary dataset");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

float get_f32(std::istream& is) {
  const std::uint32_t v = get_u32(is);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

Dataset read_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBinaryMagic, 4) != 0)
    throw ParseError("bad FDV1 magic");
  Dataset out;
  out.num_classes = get_u32(is);
  out.feature_dim = get_u32(is);
  while (true) {
    is.peek();
    if (is.eof()) break;
    FrameSequence seq;
    const std::uint32_t id_len = get_u32(is);
    seq.id.resize(id_len);
    is.read(seq.id.data(), id_len);
    const std::uint32_t num_labels = get_u32(is);
    seq.labels.resize(num_labels);
    for (auto& l : seq.labels) l = static_cast<int>(get_u32(is));
    const std::uint32_t n = get_u32(is);
    seq.num_frames = n;
    seq.feature_dim = out.feature_dim;
    seq.features.resize(static_cast<std::size_t>(n) * out.feature_dim);
    for (float& f : seq.features) f = get_f32(is);
    if (!is) throw ParseError("truncated FDV1 record");
    out.videos.push_back(std::move(seq));
  }
  return out;
}

void write_binary(std::ostream& os, const Dataset& data) {
  os.write(kBinaryMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(
                  data.num_classes ? data.num_classes : data.inferred_classes()));
  put_u32(os, static_cast<std::uint32_t>(data.feature_dim));
  for (const auto& seq : data.videos) {
    put_u32(os, static_cast<std::uint32_t>(seq.id.size()));
    os.write(seq.id.data(), static_cast<long>(seq.id.size()));
    put_u32(os, static_cast<std::uint32_t>(seq.labels.size()));
    for (int l : seq.labels) put_u32(os, static_cast<std::uint32_t>(l));
    put_u32(os, static_cast<std::uint32_t>(seq.num_frames));
    for (float f : seq.features) put_f32(os, f);
  }
}

Dataset read_jsonl(std::istream& is) {
  Dataset out;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad dataset line: ") + e.what(), line_no);
    }
    FrameSequence seq;
    try {
      seq.id = j.at("id").get<std::string>();
      seq.labels = j.at("labels").get<std::vector<int>>();
      const auto& feats = j.at("features");
      seq.num_frames = feats.size();
      for (const auto& row : feats) {
        if (seq.feature_dim == 0) seq.feature_dim = row.size();
        if (row.size() != seq.feature_dim)
          throw SchemaError("inconsistent feature dimension within video '" +
                            seq.id + "'");
        for (const auto& x : row) seq.features.push_back(x.get<float>());
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad dataset record: ") + e.what(), line_no);
    }
    std::sort(seq.labels.begin(), seq.labels.end());
    if (out.feature_dim == 0) out.feature_dim = seq.feature_dim;
    if (seq.num_frames > 0 && seq.feature_dim != out.feature_dim)
      throw SchemaError("feature dimension " + std::to_string(seq.feature_dim) +
                        " of video '" + seq.id + "' does not match dataset dimension " +
                        std::to_string(out.feature_dim));
    out.videos.push_back(std::move(seq));
  }
  return out;
}

void write_jsonl(std::ostream& os, const Dataset& data) {
  for (const auto& seq : data.videos) {
    json j;
    j["id"] = seq.id;
    j["labels"] = seq.labels;
    json feats = json::array();
    for (std::size_t t = 0; t < seq.num_frames; ++t) {
      json row = json::array();
      for (float f : seq.frame(t)) row.push_back(f);
      feats.push_back(std::move(row));
    }
    j["features"] = std::move(feats);
    os << j.dump() << "\n";
  }
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open dataset file: " + path.string());
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  const bool binary = is.gcount() == 4 && std::memcmp(magic, kBinaryMagic, 4) == 0;
  is.clear();
  is.seekg(0);
  return binary ? read_binary(is) : read_jsonl(is);
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open dataset file for writing: " + path.string());
  if (path.extension() == ".fdv")
    write_binary(os, data);
  else
    write_jsonl(os, data);
  if (!os) throw ParseError("write failed: " + path.string());
}

// ---- batching ---------------------------------------------------------------

Tensor<float> Batch::position(std::size_t t) const {
  const std::size_t B = batch(), T = time(), D = dim();
  Tensor<float> out = Tensor<float>::zeros({B, D});
  for (std::size_t b = 0; b < B; ++b) {
    const float* src = features.values.data() + (b * T + t) * D;
    std::copy(src, src + D, out.values.data() + b * D);
  }
  return out;
}

std::vector<std::uint8_t> Batch::valid(std::size_t t) const {
  const std::size_t B = batch(), T = time();
  std::vector<std::uint8_t> out(B);
  for (std::size_t b = 0; b < B; ++b)
    out[b] = mask.values[b * T + t] != 0.0f ? 1 : 0;
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_videos,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch,
                                                    bool shuffle) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(num_videos);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Prng rng = substream(shuffle_seed, "shuffle/e" + std::to_string(epoch));
    rng.shuffle(order);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < num_videos; start += batch_size) {
    const std::size_t end = std::min(num_videos, start + batch_size);
    out.emplace_back(order.begin() + static_cast<long>(start),
                     order.begin() + static_cast<long>(end));
  }
  return out;
}

Batch pack_batch_selected(const Dataset& data,
                          const std::vector<std::size_t>& indices,
                          std::size_t num_classes,
                          const std::vector<std::vector<std::size_t>>& selections) {
  if (indices.empty()) throw BoundsError("pack_batch: empty batch");
  if (selections.size() != indices.size())
    throw ShapeError("pack_batch: " + std::to_string(selections.size()) +
                     " selections for " + std::to_string(indices.size()) + " videos");
  const std::size_t B = indices.size();
  const std::size_t D = data.feature_dim;
  std::size_t T = 0;
  for (const auto& sel : selections) T = std::max(T, sel.size());
  if (T == 0) throw BoundsError("pack_batch: all selections empty");

  Batch out;
  out.features = Tensor<float>::zeros({B, T, D});
  out.mask = Tensor<float>::zeros({B, T});
  out.labels = Tensor<float>::zeros({B, num_classes});
  out.frame_indices = selections;
  for (std::size_t b = 0; b < B; ++b) {
    const FrameSequence& video = data.videos.at(indices[b]);
    out.ids.push_back(video.id);
    out.dataset_indices.push_back(indices[b]);
    const auto& sel = selections[b];
    for (std::size_t p = 0; p < sel.size(); ++p) {
      if (sel[p] >= video.num_frames)
        throw BoundsError("pack_batch: frame index " + std::to_string(sel[p]) +
                          " out of range for video '" + video.id + "'");
      const auto f = video.frame(sel[p]);
      std::copy(f.begin(), f.end(),
                out.features.values.data() + (b * T + p) * D);
      out.mask.values[b * T + p] = 1.0f;
    }
    for (int l : video.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
        throw SchemaError("label " + std::to_string(l) + " of video '" + video.id +
                          "' outside [0," + std::to_string(num_classes) + ")");
      out.labels.values[b * num_classes + static_cast<std::size_t>(l)] = 1.0f;
    }
  }
  return out;
}

Batch pack_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> selections;
  selections.reserve(indices.size());
  for (std::size_t i : indices) {
    const std::size_t n = data.videos.at(i).num_frames;
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    selections.push_back(std::move(all));
  }
  return pack_batch_selected(data, indices, num_classes, selections);
}

}  // namespace fd

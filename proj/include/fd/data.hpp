#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fd/error.hpp"
#include "fd/tensor.hpp"

namespace fd {

// One video: N per-frame feature vectors plus a multi-label target set.
struct FrameSequence {
  std::string id;
  std::size_t feature_dim = 0;
  std::size_t num_frames = 0;
  std::vector<float> features;  // num_frames x feature_dim, row-major
  std::vector<int> labels;      // sorted, unique class indices

  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(features.data() + t * feature_dim, feature_dim);
  }
  std::span<float> frame(std::size_t t) {
    return std::span<float>(features.data() + t * feature_dim, feature_dim);
  }
};

struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;  // 0 = unknown (plain JSONL has no header)
  std::vector<FrameSequence> videos;

  std::size_t size() const { return videos.size(); }
  // max label + 1, used when num_classes is unknown.
  std::size_t inferred_classes() const;
};

// Generative rule for the synthetic stand-in dataset: every video carries
// 1..3 latent event classes; each event adds its class motif onto a
// contiguous window of frames; everything else is Gaussian noise. Labels
// are exactly the injected classes, so they are recoverable from
// full-frame statistics and degrade under subsampling.
struct SyntheticSpec {
  std::size_t num_videos = 2000;
  std::size_t classes = 8;
  std::size_t feature_dim = 16;
  std::size_t min_frames = 40;
  std::size_t max_frames = 120;
  double noise_sigma = 0.5;
  double motif_scale = 1.5;
  std::size_t events_min = 1;
  std::size_t events_max = 3;
  std::size_t window_min = 4;
  std::size_t window_max = 8;
  std::uint64_t seed = 1234;

  void validate() const;
};

// Deterministic per (spec.seed, split_tag): the same call is byte-identical.
Dataset generate_synthetic(const SyntheticSpec& spec, const std::string& split_tag);

// gen-data input file: the generative rule plus split sizes. JSON with
// every field optional; unknown fields rejected.
struct GenSpec {
  SyntheticSpec base;
  std::size_t num_videos_train = 2000;
  std::size_t num_videos_eval = 500;

  static GenSpec from_json(const nlohmann::json& j);
  static GenSpec from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// The class motifs the generator injects (derived from spec.seed only, so
// train/eval splits share them). One [feature_dim] tensor per class.
std::vector<std::vector<float>> synthetic_motifs(const SyntheticSpec& spec);

// Matched-filter hit@1 of the ideal motif detector restricted to every
// `stride`-th frame. stride=1 reads everything. Used for the learnability
// check at generation time.
double motif_oracle_hit1(const Dataset& data,
                         const std::vector<std::vector<float>>& motifs,
                         std::size_t stride);

// JSON Lines (one video per line) or the packed "FDV1" binary, chosen by
// sniffing magic bytes on read and by extension (.fdv) on write.
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

// ---- batching ------------------------------------------------------------

// Padded, masked batch. mask[b][t] = 1 iff position t holds a real frame
// of video b; padded positions carry zero features.
struct Batch {
  std::vector<std::string> ids;
  std::vector<std::size_t> dataset_indices;
  Tensor<float> features;  // [B x T x D]
  Tensor<float> mask;      // [B x T]
  Tensor<float> labels;    // [B x C] multi-hot
  // Absolute frame index backing each position, per video (shorter than T
  // for videos padded at the tail). Position p of video b holds original
  // frame frame_indices[b][p].
  std::vector<std::vector<std::size_t>> frame_indices;

  std::size_t batch() const { return ids.size(); }
  std::size_t time() const { return features.shape.size() > 1 ? features.shape[1] : 0; }
  std::size_t dim() const { return features.shape.size() > 2 ? features.shape[2] : 0; }

  // [B x D] slice at position t (padded rows are zero).
  Tensor<float> position(std::size_t t) const;
  // Row validity at position t.
  std::vector<std::uint8_t> valid(std::size_t t) const;
};

// Deterministic shuffled index groups for one epoch; the last group may be
// smaller. Shuffle stream is (seed, "shuffle/e<epoch>"), so any epoch can
// be replayed in isolation.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_videos,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch,
                                                    bool shuffle = true);

// Packs whole videos (all frames).
Batch pack_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 std::size_t num_classes);

// Packs per-video frame selections; selections[i] lists the absolute frame
// indices of video indices[i] to keep, ascending.
Batch pack_batch_selected(const Dataset& data,
                          const std::vector<std::size_t>& indices,
                          std::size_t num_classes,
                          const std::vector<std::vector<std::size_t>>& selections);

}  // namespace fd

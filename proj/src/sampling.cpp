#include "fd/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "fd/prng.hpp"

namespace fd {

std::string SamplerSpec::describe() const {
  switch (kind) {
    case SamplerKind::Full:
      return "full";
    case SamplerKind::Uniform:
      return "uniform-" + std::to_string(percent);
    case SamplerKind::Random:
      return "random-" + std::to_string(percent);
  }
  return "?";
}

FrameIndexSet sample_uniform(std::size_t num_frames, std::size_t stride) {
  if (num_frames == 0) throw BoundsError("sample_uniform: empty input (N=0)");
  if (stride == 0) throw ConfigError("sample_uniform: stride must be >= 1");
  FrameIndexSet out;
  out.indices.reserve((num_frames + stride - 1) / stride);
  for (std::size_t t = 0; t < num_frames; t += stride) out.indices.push_back(t);
  return out;
}

FrameIndexSet sample_random(std::size_t num_frames, int percent,
                            std::uint64_t seed) {
  if (num_frames == 0) throw BoundsError("sample_random: empty input (N=0)");
  if (percent < 1 || percent > 100)
    throw ConfigError("sample_random: percent must be in [1,100], got " +
                      std::to_string(percent));
  std::size_t count =
      (static_cast<std::size_t>(percent) * num_frames + 99) / 100;  // ceil
  if (count < 1) count = 1;

  // Partial Fisher-Yates over [0, N), then sort the selected prefix.
  std::vector<std::size_t> pool(num_frames);
  std::iota(pool.begin(), pool.end(), 0);
  Prng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(num_frames - i));
    std::swap(pool[i], pool[j]);
  }
  FrameIndexSet out;
  out.indices.assign(pool.begin(), pool.begin() + static_cast<long>(count));
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

FrameIndexSet select_frames(const SamplerSpec& spec, std::size_t num_frames,
                            std::uint64_t seed) {
  spec.validate();
  switch (spec.kind) {
    case SamplerKind::Full:
      return sample_uniform(num_frames, 1);
    case SamplerKind::Uniform:
      return sample_uniform(num_frames, static_cast<std::size_t>(spec.stride()));
    case SamplerKind::Random:
      return sample_random(num_frames, spec.percent, seed);
  }
  throw ConfigError("select_frames: bad sampler kind");
}

Batch make_sampled_batch(const Dataset& data,
                         const std::vector<std::size_t>& indices,
                         std::size_t num_classes, const SamplerSpec& spec,
                         std::uint64_t stream_seed) {
  std::vector<std::vector<std::size_t>> selections;
  selections.reserve(indices.size());
  for (std::size_t i : indices) {
    const FrameSequence& video = data.videos.at(i);
    const auto idx = select_frames(spec, video.num_frames,
                                   derive_seed(stream_seed, video.id));
    selections.push_back(idx.indices);
  }
  return pack_batch_selected(data, indices, num_classes, selections);
}

FrameSequence gather_frames(const FrameSequence& video, const FrameIndexSet& idx) {
  FrameSequence out;
  out.id = video.id;
  out.feature_dim = video.feature_dim;
  out.labels = video.labels;
  out.num_frames = idx.indices.size();
  out.features.reserve(out.num_frames * out.feature_dim);
  for (std::size_t t : idx.indices) {
    if (t >= video.num_frames)
      throw BoundsError("gather_frames: index " + std::to_string(t) +
                        " out of range for video with " +
                        std::to_string(video.num_frames) + " frames");
    const auto f = video.frame(t);
    out.features.insert(out.features.end(), f.begin(), f.end());
  }
  return out;
}

}  // namespace fd

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fd/data.hpp"
#include "fd/error.hpp"

namespace fd {

enum class SamplerKind { Full, Uniform, Random };

// Which frames a network reads: all of them, every j-th, or a random k%
// subset. Uniform with k=100 normalizes to Full (they select identically).
struct SamplerSpec {
  SamplerKind kind = SamplerKind::Full;
  int percent = 100;        // k
  std::uint64_t seed = 0;   // Random only

  // j = round(100/k) with half-up rounding, at least 1.
  int stride() const {
    const int j = (200 + percent) / (2 * percent);
    return j < 1 ? 1 : j;
  }

  static SamplerSpec full() { return SamplerSpec{SamplerKind::Full, 100, 0}; }
  static SamplerSpec uniform(int k) {
    if (k == 100) return full();
    return SamplerSpec{SamplerKind::Uniform, k, 0};
  }
  static SamplerSpec random(int k, std::uint64_t seed) {
    return SamplerSpec{SamplerKind::Random, k, seed};
  }

  void validate() const {
    if (percent < 1 || percent > 100)
      throw ConfigError("sampler percent must be in [1,100], got " +
                        std::to_string(percent));
    if (kind == SamplerKind::Full && percent != 100)
      throw ConfigError("full sampler implies k=100");
  }

  std::string describe() const;
};

// Strictly increasing frame indices in [0, N).
struct FrameIndexSet {
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

// {0, j, 2j, ...} below N; length ceil(N/j).
FrameIndexSet sample_uniform(std::size_t num_frames, std::size_t stride);

// Exactly max(1, ceil(k*N/100)) distinct indices drawn uniformly without
// replacement (partial Fisher-Yates over [0,N)), returned sorted ascending
// so temporal order is preserved for the recurrent encoder.
FrameIndexSet sample_random(std::size_t num_frames, int percent,
                            std::uint64_t seed);

// Applies the spec. `seed` feeds the Random kind only (callers derive it
// per video and per epoch); Full and Uniform ignore it.
FrameIndexSet select_frames(const SamplerSpec& spec, std::size_t num_frames,
                            std::uint64_t seed);

// Sub-sequence at the given indices, original order, labels unchanged.
FrameSequence gather_frames(const FrameSequence& video, const FrameIndexSet& idx);

// Applies the sampler to every video of a batch and packs the selections.
// The Random kind draws per video from substream (stream_seed, video id),
// so a video's sample is independent of batch composition; callers fold
// the epoch (or an eval tag) into stream_seed.
Batch make_sampled_batch(const Dataset& data,
                         const std::vector<std::size_t>& indices,
                         std::size_t num_classes, const SamplerSpec& spec,
                         std::uint64_t stream_seed);

}  // namespace fd

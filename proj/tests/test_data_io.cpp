#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fd/data.hpp"

using namespace fd;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_videos = 30;
  s.classes = 6;
  s.feature_dim = 8;
  s.min_frames = 10;
  s.max_frames = 25;
  s.seed = 77;
  return s;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic per seed and split") {
  const auto spec = small_spec();
  Dataset a = generate_synthetic(spec, "train");
  Dataset b = generate_synthetic(spec, "train");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.videos[i].id == b.videos[i].id);
    CHECK(a.videos[i].features == b.videos[i].features);
    CHECK(a.videos[i].labels == b.videos[i].labels);
  }
  Dataset c = generate_synthetic(spec, "eval");
  CHECK(c.videos[0].features != a.videos[0].features);
}

TEST_CASE("noiseless single event spanning all frames equals the motif") {
  SyntheticSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  spec.events_min = spec.events_max = 1;
  spec.min_frames = 5;
  spec.max_frames = 5;
  spec.window_min = spec.window_max = 5;  // the whole video
  Dataset d = generate_synthetic(spec, "train");
  const auto motifs = synthetic_motifs(spec);
  for (const auto& v : d.videos) {
    REQUIRE(v.labels.size() == 1);
    const auto& motif = motifs[static_cast<std::size_t>(v.labels[0])];
    for (std::size_t t = 0; t < v.num_frames; ++t)
      for (std::size_t k = 0; k < v.feature_dim; ++k)
        CHECK(v.frame(t)[k] == doctest::Approx(motif[k]).epsilon(1e-6));
  }
}

TEST_CASE("labels are exactly the injected event classes") {
  Dataset d = generate_synthetic(small_spec(), "train");
  for (const auto& v : d.videos) {
    REQUIRE(!v.labels.empty());
    REQUIRE(v.labels.size() <= 3);
    for (int l : v.labels) {
      CHECK(l >= 0);
      CHECK(l < 6);
    }
  }
}

TEST_CASE("full-frame motif oracle beats its subsampled self (learnability)") {
  SyntheticSpec spec;  // package defaults, smaller video count for speed
  spec.num_videos = 200;
  Dataset d = generate_synthetic(spec, "train");
  const auto motifs = synthetic_motifs(spec);
  const double full = motif_oracle_hit1(d, motifs, 1);
  const double sub = motif_oracle_hit1(d, motifs, 10);
  CHECK(full > sub);
}

TEST_CASE("jsonl round trip is value-exact") {
  Dataset d = generate_synthetic(small_spec(), "train");
  const auto path = temp_file("fd_test_roundtrip.jsonl");
  write_dataset(path, d);
  Dataset r = read_dataset(path);
  REQUIRE(r.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(r.videos[i].id == d.videos[i].id);
    CHECK(r.videos[i].labels == d.videos[i].labels);
    CHECK(r.videos[i].features == d.videos[i].features);  // bit-equal
  }
  // write(read(f)) == f, canonicalized
  const auto path2 = temp_file("fd_test_roundtrip2.jsonl");
  write_dataset(path2, r);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("binary FDV1 round trip is value-exact") {
  Dataset d = generate_synthetic(small_spec(), "train");
  const auto path = temp_file("fd_test_roundtrip.fdv");
  write_dataset(path, d);
  Dataset r = read_dataset(path);
  REQUIRE(r.size() == d.size());
  CHECK(r.num_classes == 6);
  CHECK(r.feature_dim == d.feature_dim);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(r.videos[i].id == d.videos[i].id);
    CHECK(r.videos[i].labels == d.videos[i].labels);
    CHECK(r.videos[i].features == d.videos[i].features);
  }
  fs::remove(path);
}

TEST_CASE("empty file reads as an empty dataset") {
  const auto path = temp_file("fd_test_empty.jsonl");
  std::ofstream(path).close();
  Dataset d = read_dataset(path);
  CHECK(d.size() == 0);
  fs::remove(path);
}

TEST_CASE("hand-written fixture parses field by field") {
  const auto path = temp_file("fd_test_fixture.jsonl");
  {
    std::ofstream os(path);
    os << R"({"id":"clip-7","labels":[2,0],"features":[[1.5,-2.0],[0.25,4.0],[0.0,1.0]]})"
       << "\n";
  }
  Dataset d = read_dataset(path);
  REQUIRE(d.size() == 1);
  const auto& v = d.videos[0];
  CHECK(v.id == "clip-7");
  CHECK(v.labels == std::vector<int>{0, 2});  // canonicalized ascending
  REQUIRE(v.num_frames == 3);
  REQUIRE(v.feature_dim == 2);
  CHECK(v.frame(0)[0] == 1.5f);
  CHECK(v.frame(0)[1] == -2.0f);
  CHECK(v.frame(2)[1] == 1.0f);
  fs::remove(path);
}

TEST_CASE("malformed line reports its line number") {
  const auto path = temp_file("fd_test_bad.jsonl");
  {
    std::ofstream os(path);
    os << R"({"id":"a","labels":[],"features":[[1.0]]})" << "\n";
    os << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("line 2"), ParseError);
  fs::remove(path);
}

TEST_CASE("inconsistent feature dimension is a schema error") {
  const auto path = temp_file("fd_test_dim.jsonl");
  {
    std::ofstream os(path);
    os << R"({"id":"a","labels":[0],"features":[[1.0,2.0],[3.0]]})" << "\n";
  }
  CHECK_THROWS_AS(read_dataset(path), SchemaError);
  fs::remove(path);
}

TEST_CASE("epoch batching: sizes, permutation, determinism") {
  auto groups = epoch_batches(7, 3, 5, 0);
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].size() == 3);
  CHECK(groups[1].size() == 3);
  CHECK(groups[2].size() == 1);

  std::multiset<std::size_t> seen;
  for (const auto& g : groups) seen.insert(g.begin(), g.end());
  std::multiset<std::size_t> expect{0, 1, 2, 3, 4, 5, 6};
  CHECK(seen == expect);

  CHECK(epoch_batches(7, 3, 5, 0) == groups);          // same epoch: identical
  CHECK(epoch_batches(7, 3, 5, 1) != groups);          // next epoch reshuffles
  CHECK(epoch_batches(7, 3, 5, 0, false)[0] == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("padding and masking recover the original sequences") {
  Dataset d;
  d.feature_dim = 2;
  for (std::size_t n : {7ul, 10ul}) {
    FrameSequence v;
    v.id = "v" + std::to_string(n);
    v.feature_dim = 2;
    v.num_frames = n;
    v.features.resize(n * 2);
    for (std::size_t i = 0; i < v.features.size(); ++i)
      v.features[i] = static_cast<float>(n * 100 + i);
    v.labels = {static_cast<int>(n % 3)};
    d.videos.push_back(std::move(v));
  }
  Batch b = pack_batch(d, {0, 1}, 4);
  CHECK(b.time() == 10);
  // first video masked for t in [7, 10)
  for (std::size_t t = 0; t < 10; ++t) {
    CHECK(b.mask.values[0 * 10 + t] == (t < 7 ? 1.0f : 0.0f));
    CHECK(b.mask.values[1 * 10 + t] == 1.0f);
  }
  // padded positions carry zero features
  for (std::size_t t = 7; t < 10; ++t)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(b.features.values[(0 * 10 + t) * 2 + k] == 0.0f);
  // un-padding via the mask recovers the originals exactly
  for (std::size_t vi = 0; vi < 2; ++vi) {
    const auto& orig = d.videos[vi];
    std::size_t pos = 0;
    for (std::size_t t = 0; t < 10; ++t) {
      if (b.mask.values[vi * 10 + t] == 0.0f) continue;
      for (std::size_t k = 0; k < 2; ++k)
        REQUIRE(b.features.values[(vi * 10 + t) * 2 + k] == orig.frame(pos)[k]);
      ++pos;
    }
    REQUIRE(pos == orig.num_frames);
  }
  // labels multi-hot
  CHECK(b.labels.values[0 * 4 + 1] == 1.0f);
  CHECK(b.labels.values[1 * 4 + 1] == 1.0f);
}

#include <doctest.h>

#include <cmath>

#include "fd/encoder.hpp"
#include "fd/gradcheck.hpp"
#include "fd/losses.hpp"
#include "fd/sampling.hpp"
#include "test_helpers.hpp"

using namespace fd;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.feature_dim = 3;
  cfg.block_len = 5;
  cfg.num_layers = 2;
  cfg.cell_size = 4;
  cfg.encoding_dim = 4;
  return cfg;
}

}  // namespace

TEST_CASE("shape law: final is always [B x E] across N and m") {
  for (std::size_t n : {1ul, 5ul, 7ul, 20ul, 100ul}) {
    for (std::size_t m : {1ul, 5ul, 20ul}) {
      EncoderConfig cfg = tiny_config();
      cfg.block_len = m;
      Dataset d = fdtest::random_dataset(3, 4, cfg.feature_dim, n, n, 9 + n);
      Batch batch = pack_batch(d, {0, 1, 2}, 4);
      ParameterStore<float> store;
      init_encoder(store, "enc", cfg, 1);
      Tape<float> tape;
      auto net = bind_encoder(tape, store, "enc", cfg, false);
      auto enc = encode(tape, cfg, net, batch);
      REQUIRE(enc.final.value().shape == Shape{3, cfg.encoding_dim});
      REQUIRE(enc.frame_states.size() == batch.time());
    }
  }
}

TEST_CASE("zero parameters give a zero encoding regardless of input") {
  EncoderConfig cfg = tiny_config();
  Dataset d = fdtest::random_dataset(2, 4, cfg.feature_dim, 8, 12, 3);
  Batch batch = pack_batch(d, {0, 1}, 4);
  ParameterStore<float> store;
  init_encoder(store, "enc", cfg, 1);
  for (auto& [name, tensor] : store)
    for (auto& v : tensor.values) v = 0.0f;
  Tape<float> tape;
  auto net = bind_encoder(tape, store, "enc", cfg, false);
  auto enc = encode(tape, cfg, net, batch);
  for (float v : enc.final.value().values) CHECK(v == 0.0f);
}

TEST_CASE("padding invariance: extra padding never changes the encoding") {
  EncoderConfig cfg = tiny_config();
  Dataset d = fdtest::random_dataset(2, 4, cfg.feature_dim, 7, 7, 21);
  ParameterStore<float> store;
  init_encoder(store, "enc", cfg, 5);

  // batch padded only to the batch max (both videos have N=7)
  Batch tight = pack_batch(d, {0, 1}, 4);
  REQUIRE(tight.time() == 7);

  // same videos packed alongside a long one, then sliced out of the result
  Dataset d3 = d;
  d3.videos.push_back(fdtest::random_dataset(1, 4, cfg.feature_dim, 19, 19, 8).videos[0]);
  Batch padded = pack_batch(d3, {0, 1, 2}, 4);
  REQUIRE(padded.time() == 19);

  Tape<float> tape;
  auto net = bind_encoder(tape, store, "enc", cfg, false);
  auto enc_tight = encode(tape, cfg, net, tight);
  auto enc_padded = encode(tape, cfg, net, padded);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t e = 0; e < cfg.encoding_dim; ++e)
      REQUIRE(enc_tight.final.value().at(b, e) ==
              enc_padded.final.value().at(b, e));
}

TEST_CASE("eval-mode encoding is bit-identical across runs") {
  EncoderConfig cfg = tiny_config();
  Dataset d = fdtest::random_dataset(3, 4, cfg.feature_dim, 6, 14, 77);
  Batch batch = pack_batch(d, {0, 1, 2}, 4);
  ParameterStore<float> store;
  init_encoder(store, "enc", cfg, 2);
  Tape<float> t1, t2;
  auto n1 = bind_encoder(t1, store, "enc", cfg, false);
  auto n2 = bind_encoder(t2, store, "enc", cfg, false);
  CHECK(encode(t1, cfg, n1, batch).final.value().values ==
        encode(t2, cfg, n2, batch).final.value().values);
}

TEST_CASE("identical params + full-frame student + same m gives E_T == E_S") {
  EncoderConfig cfg = tiny_config();
  Dataset d = fdtest::random_dataset(2, 4, cfg.feature_dim, 9, 13, 31);
  ParameterStore<float> store;
  init_encoder(store, "teacher", cfg, 4);
  // student shares the teacher's values under its own names
  ParameterStore<float> sstore;
  init_encoder(sstore, "student", cfg, 4);
  for (auto& [name, tensor] : sstore)
    tensor = store.at("teacher" + name.substr(std::string("student").size()));

  Batch full = pack_batch(d, {0, 1}, 4);
  Batch sampled = make_sampled_batch(d, {0, 1}, 4, SamplerSpec::full(), 0);
  Tape<float> tape;
  auto tn = bind_encoder(tape, store, "teacher", cfg, false);
  auto sn = bind_encoder(tape, sstore, "student", cfg, false);
  auto et = encode(tape, cfg, tn, full);
  auto es = encode(tape, cfg, sn, sampled);
  CHECK(et.final.value().values == es.final.value().values);
}

TEST_CASE("classify: zero head gives 0.5 everywhere; dot-product oracle") {
  HeadConfig hc{4, 3, 2};
  ParameterStore<float> store;
  init_head<float>(store, "head", hc, 7);
  for (auto& [name, tensor] : store)
    for (auto& v : tensor.values) v = 0.0f;
  Tape<float> tape;
  auto head = bind_head(tape, store, "head", false);
  auto enc = tape.leaf(Tensor<float>::full({2, 4}, 0.3f));
  auto yhat = classify(tape, head, enc);
  REQUIRE(yhat.value().shape == Shape{2, 2});
  for (float v : yhat.value().values) CHECK(v == 0.5f);

  // single output class: yhat = sigmoid(w . relu(W1 e + b1) + b)
  HeadConfig hc1{3, 2, 1};
  ParameterStore<double> s1;
  init_head<double>(s1, "head", hc1, 9);
  Tape<double> t1;
  auto h1 = bind_head(t1, s1, "head", false);
  Tensor<double> e({1, 3}, {0.5, -0.25, 0.75});
  auto out = classify(t1, h1, t1.leaf(e));
  // scalar oracle
  const auto& w1 = s1.at("head/hidden/w");
  const auto& b1 = s1.at("head/hidden/b");
  const auto& w2 = s1.at("head/out/w");
  const auto& b2 = s1.at("head/out/b");
  double hid[2];
  for (int j = 0; j < 2; ++j) {
    double a = b1.values[j];
    for (int k = 0; k < 3; ++k) a += w1.values[j * 3 + k] * e.values[k];
    hid[j] = a > 0 ? a : 0;
  }
  double z = b2.values[0];
  for (int j = 0; j < 2; ++j) z += w2.values[j] * hid[j];
  const double expect = 1.0 / (1.0 + std::exp(-z));
  CHECK(out.value().values[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("multi-label outputs do not sum to 1") {
  // two classes, zero weights, bias (1,1): sigmoid(1)+sigmoid(1) ~ 1.462
  HeadConfig hc{2, 2, 2};
  ParameterStore<double> store;
  init_head<double>(store, "head", hc, 3);
  for (auto& [name, tensor] : store)
    for (auto& v : tensor.values) v = 0.0;
  store.at("head/out/b").values = {1.0, 1.0};
  Tape<double> tape;
  auto head = bind_head(tape, store, "head", false);
  auto yhat = classify(tape, head, tape.leaf(Tensor<double>::zeros({1, 2})));
  const double s1 = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(yhat.value().values[0] + yhat.value().values[1] ==
        doctest::Approx(2 * s1));
  CHECK(yhat.value().values[0] + yhat.value().values[1] != doctest::Approx(1.0));
}

TEST_CASE("align_states fixtures") {
  Dataset d = fdtest::random_dataset(1, 4, 3, 10, 10, 1);
  Batch full = pack_batch(d, {0}, 4);

  SUBCASE("full student pairs every position with itself") {
    Batch student = make_sampled_batch(d, {0}, 4, SamplerSpec::full(), 0);
    auto pairs = align_positions(full, student);
    REQUIRE(pairs.size() == 10);
    for (const auto& p : pairs.pairs) CHECK(p.student_pos == p.teacher_pos);
  }

  SUBCASE("N=10, j=2 gives 5 pairs at absolute indices 0,2,4,6,8") {
    Batch student = make_sampled_batch(d, {0}, 4, SamplerSpec::uniform(50), 0);
    auto pairs = align_positions(full, student);
    REQUIRE(pairs.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(pairs.pairs[i].student_pos == i);
      CHECK(pairs.pairs[i].teacher_pos == 2 * i);
    }
  }

  SUBCASE("N=7, j=3 gives pairs at 0,3,6 (via sample_uniform oracle)") {
    Dataset d7 = fdtest::random_dataset(1, 4, 3, 7, 7, 2);
    Batch t7 = pack_batch(d7, {0}, 4);
    std::vector<std::vector<std::size_t>> sel{sample_uniform(7, 3).indices};
    Batch s7 = pack_batch_selected(d7, {0}, 4, sel);
    auto pairs = align_positions(t7, s7);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs.pairs[0].teacher_pos == 0);
    CHECK(pairs.pairs[1].teacher_pos == 3);
    CHECK(pairs.pairs[2].teacher_pos == 6);
  }

  SUBCASE("student frame absent from teacher selection is an error") {
    std::vector<std::vector<std::size_t>> tsel{{0, 2, 4}};
    std::vector<std::vector<std::size_t>> ssel{{0, 3}};
    Batch t = pack_batch_selected(d, {0}, 4, tsel);
    Batch s = pack_batch_selected(d, {0}, 4, ssel);
    CHECK_THROWS_AS(align_positions(t, s), BoundsError);
  }
}

TEST_CASE("full hierarchical encode + classify + L_model gradient check") {
  EncoderConfig cfg;
  cfg.feature_dim = 2;
  cfg.block_len = 2;
  cfg.num_layers = 2;
  cfg.cell_size = 3;
  cfg.encoding_dim = 3;
  HeadConfig hc{3, 2, 2};

  Dataset d = fdtest::random_dataset(2, 2, cfg.feature_dim, 3, 5, 55);
  Batch batch = pack_batch(d, {0, 1}, 2);

  ParameterStore<double> params;
  init_encoder(params, "enc", cfg, 11);
  init_head<double>(params, "head", hc, 11);
  Tensor<double> labels = batch.labels.cast<double>();

  const double err = check_gradients(
      params, [&](Tape<double>& t, const LeafMap<double>& l) {
        auto net = encoder_from_leaves(l, "enc", cfg);
        HeadLeaves<double> head{l.at("head/hidden/w"), l.at("head/hidden/b"),
                                l.at("head/out/w"), l.at("head/out/b")};
        auto enc = encode(t, cfg, net, batch);
        auto yhat = classify(t, head, enc.final);
        return cross_entropy_multilabel(labels, yhat);
      });
  CHECK(err <= 1e-4);
}

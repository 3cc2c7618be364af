#include <doctest.h>

#include <cmath>

#include "fd/gradcheck.hpp"
#include "fd/losses.hpp"
#include "fd/sampling.hpp"
#include "test_helpers.hpp"

using namespace fd;

TEST_CASE("cross entropy analytic fixtures") {
  Tape<double> t;
  // y = [1, 0], yhat = [0.5, 0.5] -> 2 ln 2
  auto yhat = t.leaf(make_matrix<double>(1, 2, {0.5, 0.5}));
  Tensor<double> y = make_matrix<double>(1, 2, {1.0, 0.0});
  CHECK(cross_entropy_multilabel(y, yhat).value().values[0] ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // yhat -> y (clamped): loss -> C * (-ln(1-eps)) ~ 0
  auto exact = t.leaf(make_matrix<double>(1, 2, {1.0, 0.0}));
  const double eps = 1e-7;
  CHECK(cross_entropy_multilabel(y, exact).value().values[0] ==
        doctest::Approx(2.0 * -std::log(1.0 - eps)).epsilon(1e-6));

  // labels outside {0,1} are a label error
  Tensor<double> bad = make_matrix<double>(1, 2, {0.5, 0.0});
  CHECK_THROWS_AS(cross_entropy_multilabel(bad, yhat), SchemaError);
}

TEST_CASE("cross entropy matches a scalar double-loop oracle (B=3, C=4)") {
  Prng rng(414);
  Tensor<double> y = Tensor<double>::zeros({3, 4});
  Tensor<double> p = Tensor<double>::zeros({3, 4});
  for (auto& v : y.values) v = rng.uniform01() < 0.5 ? 0.0 : 1.0;
  for (auto& v : p.values) v = 0.05 + 0.9 * rng.uniform01();
  Tape<double> t;
  const double got =
      cross_entropy_multilabel(y, t.leaf(p)).value().values[0];
  double expect = 0.0;
  for (int b = 0; b < 3; ++b)
    for (int c = 0; c < 4; ++c) {
      const double yy = y.values[b * 4 + c], pp = p.values[b * 4 + c];
      expect += -(yy * std::log(pp) + (1.0 - yy) * std::log(1.0 - pp));
    }
  expect /= 3.0;
  CHECK(got == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("cross entropy is minimized exactly at yhat = y") {
  // gradient sign on either side of y
  ParameterStore<double> params;
  params.emplace("p", make_matrix<double>(1, 2, {0.6, 0.4}));
  Tensor<double> y = make_matrix<double>(1, 2, {1.0, 0.0});
  Tape<double> t;
  auto leaves = bind_all(t, params, true);
  auto loss = cross_entropy_multilabel(y, leaves.at("p"));
  t.backward(loss);
  const auto& g = t.grad(leaves.at("p"));
  CHECK(g.values[0] < 0.0);  // pushing p0 up toward 1 decreases loss
  CHECK(g.values[1] > 0.0);  // pushing p1 down toward 0 decreases loss
}

TEST_CASE("encoding match loss fixtures") {
  Tape<double> t;
  auto a = t.leaf(make_matrix<double>(1, 2, {1, 2}), true);
  auto b = t.leaf(make_matrix<double>(1, 2, {1, 2}), true);
  CHECK(encoding_match_loss(a, b).value().values[0] == 0.0);

  auto et = t.leaf(make_matrix<double>(1, 2, {1, 2}), true);
  auto es = t.leaf(make_matrix<double>(1, 2, {0, 0}), true);
  CHECK(encoding_match_loss(et, es).value().values[0] == doctest::Approx(5.0));

  // random pair, B=2: matches sum(d^2)/B
  Prng rng(3434);
  Tensor<double> x = Tensor<double>::zeros({2, 3});
  Tensor<double> z = Tensor<double>::zeros({2, 3});
  for (auto& v : x.values) v = rng.uniform_sym(2.0);
  for (auto& v : z.values) v = rng.uniform_sym(2.0);
  double expect = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    const double d = x.values[i] - z.values[i];
    expect += d * d;
  }
  expect /= 2.0;
  CHECK(encoding_match_loss(t.leaf(x), t.leaf(z)).value().values[0] ==
        doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("stop-gradient: teacher side receives no gradient by default") {
  ParameterStore<double> params;
  params.emplace("et", make_matrix<double>(2, 2, {1, 2, 3, 4}));
  params.emplace("es", make_matrix<double>(2, 2, {0, 1, 2, 3}));
  Tape<double> t;
  auto leaves = bind_all(t, params, true);
  auto loss = encoding_match_loss(leaves.at("et"), leaves.at("es"), true);
  t.backward(loss);
  CHECK_FALSE(t.has_grad(leaves.at("et").id));
  CHECK(t.has_grad(leaves.at("es").id));

  // ablation switch: bidirectional gradients
  Tape<double> t2;
  auto l2 = bind_all(t2, params, true);
  auto loss2 = encoding_match_loss(l2.at("et"), l2.at("es"), false);
  t2.backward(loss2);
  CHECK(t2.has_grad(l2.at("et").id));
}

TEST_CASE("intermediate match loss") {
  EncoderConfig cfg;
  cfg.feature_dim = 3;
  cfg.block_len = 2;
  cfg.num_layers = 1;
  cfg.cell_size = 3;
  cfg.encoding_dim = 3;

  Dataset d = fdtest::random_dataset(2, 4, cfg.feature_dim, 10, 10, 66);
  ParameterStore<float> store;
  init_encoder(store, "enc", cfg, 12);

  SUBCASE("identical networks, student reads all frames -> loss 0") {
    Batch full = pack_batch(d, {0, 1}, 4);
    Batch sful = make_sampled_batch(d, {0, 1}, 4, SamplerSpec::full(), 0);
    Tape<float> tape;
    auto net = bind_encoder(tape, store, "enc", cfg, false);
    auto et = encode(tape, cfg, net, full);
    auto es = encode(tape, cfg, net, sful);
    auto pairs = align_states(et, es);
    auto loss = intermediate_match_loss(tape, et, es, pairs);
    CHECK(loss.value().values[0] == 0.0f);
  }

  SUBCASE("one pair, [1,1] vs [0,0] -> 2") {
    // hand-constructed encodings over a 1-video batch
    Dataset d1 = fdtest::random_dataset(1, 4, cfg.feature_dim, 1, 1, 5);
    Batch b1 = pack_batch(d1, {0}, 4);
    Tape<float> tape;
    VideoEncoding<float> teacher, student;
    teacher.batch = &b1;
    student.batch = &b1;
    teacher.frame_states = {tape.leaf(make_matrix<float>(1, 2, {1, 1}))};
    student.frame_states = {tape.leaf(make_matrix<float>(1, 2, {0, 0}))};
    StatePairs pairs;
    pairs.pairs.push_back({0, 0, 0});
    auto loss = intermediate_match_loss(tape, teacher, student, pairs);
    CHECK(loss.value().values[0] == doctest::Approx(2.0f));

    StatePairs empty;
    CHECK_THROWS_AS(intermediate_match_loss(tape, teacher, student, empty),
                    BoundsError);
  }

  SUBCASE("5 pairs from N=10, j=2 equal the hand-looped mean") {
    Batch full = pack_batch(d, {0, 1}, 4);
    Batch half = make_sampled_batch(d, {0, 1}, 4, SamplerSpec::uniform(50), 0);
    Tape<float> tape;
    auto net = bind_encoder(tape, store, "enc", cfg, false);
    auto et = encode(tape, cfg, net, full);
    auto es = encode(tape, cfg, net, half);
    auto pairs = align_states(et, es);
    REQUIRE(pairs.size() == 10);  // 5 per video, 2 videos
    auto loss = intermediate_match_loss(tape, et, es, pairs);
    double expect = 0.0;
    for (const auto& p : pairs.pairs) {
      const auto& ts = et.frame_states[p.teacher_pos].value();
      const auto& ss = es.frame_states[p.student_pos].value();
      for (std::size_t c = 0; c < ts.cols(); ++c) {
        const double diff = double(ts.at(p.video, c)) - double(ss.at(p.video, c));
        expect += diff * diff;
      }
    }
    expect /= static_cast<double>(pairs.size());
    CHECK(loss.value().values[0] == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("combine fixtures") {
  Tape<float> t;
  auto lm = t.leaf(Tensor<float>::scalar(0.7f));
  auto lf = t.leaf(Tensor<float>::scalar(0.3f));
  auto breakdown = combine<float>(lm, lf, std::nullopt, 1.0, 0.0, Phase::Joint);
  CHECK(breakdown.total == doctest::Approx(1.0));
  CHECK(breakdown.total ==
        doctest::Approx(breakdown.l_model +
                        breakdown.lambda_final * breakdown.l_student_final +
                        breakdown.lambda_inter * breakdown.l_student_inter));

  auto lf2 = t.leaf(Tensor<float>::scalar(0.5f));
  auto li2 = t.leaf(Tensor<float>::scalar(0.5f));
  auto lm2 = t.leaf(Tensor<float>::scalar(0.5f));
  auto b2 = combine<float>(lm2, lf2, li2, 1.0, 1.0, Phase::Joint);
  CHECK(b2.total == doctest::Approx(1.5));

  // finetune ignores matching losses entirely
  auto b3 = combine<float>(lm2, lf2, li2, 1.0, 1.0, Phase::Finetune);
  CHECK(b3.total == doctest::Approx(0.5));
  CHECK(b3.total ==
        doctest::Approx(b3.l_model + b3.lambda_final * b3.l_student_final +
                        b3.lambda_inter * b3.l_student_inter));

  CHECK_THROWS_AS(
      combine<float>(lm, lf, std::nullopt, -1.0, 0.0, Phase::Joint),
      ConfigError);
}

TEST_CASE("joint loss with both matching terms passes the gradient check") {
  EncoderConfig cfg;
  cfg.feature_dim = 2;
  cfg.block_len = 2;
  cfg.num_layers = 2;
  cfg.cell_size = 3;
  cfg.encoding_dim = 3;
  HeadConfig hc{3, 2, 2};

  Dataset d = fdtest::random_dataset(2, 2, cfg.feature_dim, 4, 6, 7070);
  Batch full = pack_batch(d, {0, 1}, 2);
  Batch sampled = make_sampled_batch(d, {0, 1}, 2, SamplerSpec::uniform(50), 3);

  ParameterStore<double> params;
  init_encoder(params, "teacher", cfg, 21);
  init_encoder(params, "student", cfg, 22);
  init_head<double>(params, "head", hc, 23);
  Tensor<double> labels = full.labels.cast<double>();

  // Bidirectional matching gradients: stop-gradient intentionally drops the
  // teacher-side derivative, so the full-derivative check runs with the
  // ablation switch off. The stop-gradient contract has its own test above.
  const double err = check_gradients(
      params, [&](Tape<double>& t, const LeafMap<double>& l) {
        auto teacher = encoder_from_leaves(l, "teacher", cfg);
        auto student = encoder_from_leaves(l, "student", cfg);
        HeadLeaves<double> head{l.at("head/hidden/w"), l.at("head/hidden/b"),
                                l.at("head/out/w"), l.at("head/out/b")};
        auto et = encode(t, cfg, teacher, full);
        auto es = encode(t, cfg, student, sampled);
        auto yhat = classify(t, head, et.final);
        auto l_model = cross_entropy_multilabel(labels, yhat);
        auto l_final = encoding_match_loss(et.final, es.final, false);
        auto pairs = align_states(et, es);
        auto l_inter = intermediate_match_loss(t, et, es, pairs, false);
        auto breakdown =
            combine<double>(l_model, l_final, l_inter, 1.0, 1.0, Phase::Joint);
        return breakdown.total_var;
      });
  CHECK(err <= 1e-4);
}

#include <catch2/catch_amalgamated.hpp>
#include <cstring>

#include "restore/gradcheck.hh"
#include "restore/model.hh"

using namespace restore;

namespace {

template <typename S>
Tensor<S> random_image(Rng& rng) {
  Tensor<S> img({28, 28});
  for (auto& v : img.data) v = static_cast<S>(uniform(rng));
  return img;
}

}  // namespace

TEST_CASE("encoder shape trace follows the selected architecture exactly") {
  Rng rng(1);
  auto model = CnnLstmModel<float>::init(DecoderConfig{}, rng);
  std::vector<Shape> want{{32, 28, 28}, {32, 14, 14}, {64, 14, 14}, {64, 7, 7}, {100}};
  CHECK(encoder_shape_trace(model.encoder) == want);
}

TEST_CASE("parameter census matches the closed-form count") {
  // encoder: 32*(1*5*5)+32 + 64*(32*5*5)+64 + 3136*100+100          = 365,796
  // decoder (H=128, V=100, R=28, L=5):
  //   bottom 4*(28*128 + 128*128 + 100*128 + 28*128 + 128)          = 145,920
  //   upper  4*4*(128*128 + 128*128 + 128)                          = 526,336
  //   projection 128*28 + 28                                        =   3,612
  Rng rng(2);
  DecoderConfig cfg;
  auto model = CnnLstmModel<float>::init(cfg, rng);
  CHECK(CnnLstmModel<float>::expected_param_count(cfg) == 1041664u);
  CHECK(model.param_count() == 1041664u);

  auto baseline = CnnCnnBaseline<float>::init(rng);
  CHECK(CnnCnnBaseline<float>::expected_param_count() == 104129u);
  CHECK(baseline.param_count() == 104129u);
}

TEST_CASE("encode produces a width-100 thought vector in (-1,1)") {
  Rng rng(3);
  auto model = CnnLstmModel<float>::init(DecoderConfig{}, rng);
  Tensor<float> img = random_image<float>(rng);
  Tensor<float> v = encode(model, img);
  REQUIRE(v.shape == Shape{100});
  for (float x : v.data) {
    CHECK(x > -1.0f);
    CHECK(x < 1.0f);
  }
}

TEST_CASE("encode of a zero image with zero biases is zero") {
  Rng rng(4);
  auto model = CnnLstmModel<double>::init(DecoderConfig{}, rng);  // biases start at zero
  Tensor<double> img({28, 28});
  Tensor<double> v = encode(model, img);
  for (double x : v.data) CHECK(x == 0.0);
}

TEST_CASE("encode rejects unnormalized input") {
  Rng rng(5);
  auto model = CnnLstmModel<float>::init(DecoderConfig{}, rng);
  Tensor<float> img = Tensor<float>::full({28, 28}, 3.0f);
  CHECK_THROWS_AS(encode(model, img), DataError);
  img = Tensor<float>::full({28, 28}, -0.25f);
  CHECK_THROWS_AS(forward(model, img), DataError);
}

TEST_CASE("encode is bit-deterministic for a fixed seed and image") {
  Rng seed_a(42), seed_b(42);
  auto model_a = CnnLstmModel<float>::init(DecoderConfig{}, seed_a);
  auto model_b = CnnLstmModel<float>::init(DecoderConfig{}, seed_b);
  Rng img_rng(6);
  Tensor<float> img = random_image<float>(img_rng);
  Tensor<float> va = encode(model_a, img);
  Tensor<float> vb = encode(model_b, img);
  CHECK(std::memcmp(va.ptr(), vb.ptr(), va.numel() * sizeof(float)) == 0);
}

TEST_CASE("decode emits 28 rows of width 28") {
  Rng rng(7);
  DecoderConfig cfg;
  cfg.hidden = 32;  // smaller instance, same topology
  auto model = CnnLstmModel<float>::init(cfg, rng);
  Tensor<float> img = random_image<float>(rng);
  Tensor<float> v = encode(model, img);
  Tensor<float> out = decode(model, v, img);
  CHECK(out.shape == Shape{28, 28});
  for (float x : out.data) {
    CHECK(x > 0.0f);
    CHECK(x < 1.0f);
  }
}

TEST_CASE("decode with zero parameters emits constant 0.5 rows") {
  Rng rng(8);
  DecoderConfig cfg;
  cfg.hidden = 16;
  auto model = CnnLstmModel<double>::init(cfg, rng);
  auto zero_gate = [](DirectGateParams<double>& g) {
    for (auto* t : {&g.wx, &g.wh, &g.wv, &g.wy, &g.b})
      for (auto& v : t->data) v = 0.0;
  };
  zero_gate(model.decoder.bottom.input);
  zero_gate(model.decoder.bottom.forget);
  zero_gate(model.decoder.bottom.output);
  zero_gate(model.decoder.bottom.candidate);
  for (auto& cell : model.decoder.upper)
    for (auto* g : {&cell.input, &cell.forget, &cell.output, &cell.candidate})
      for (auto* t : {&g->wx, &g->wh, &g->b})
        for (auto& v : t->data) v = 0.0;
  for (auto& v : model.decoder.projection.weights.data) v = 0.0;
  for (auto& v : model.decoder.projection.bias.data) v = 0.0;

  Tensor<double> img = random_image<double>(rng);
  Tensor<double> v({100});
  Tensor<double> out = decode(model, v, img);
  for (double x : out.data) CHECK(x == 0.5);
}

TEST_CASE("decoder is causal: later corrupted rows cannot affect earlier output") {
  Rng rng(9);
  DecoderConfig cfg;
  cfg.hidden = 24;
  auto model = CnnLstmModel<double>::init(cfg, rng);
  Tensor<double> img = random_image<double>(rng);
  Tensor<double> v({100});
  for (auto& x : v.data) x = 2.0 * uniform(rng) - 1.0;  // v held fixed

  Tensor<double> img2 = img;
  for (std::size_t c = 0; c < 28; ++c) img2(27, c) = uniform(rng);

  Tensor<double> out1 = decode(model, v, img);
  Tensor<double> out2 = decode(model, v, img2);
  CHECK(std::memcmp(out1.ptr(), out2.ptr(), 27 * 28 * sizeof(double)) == 0);
  bool last_changed = false;
  for (std::size_t c = 0; c < 28; ++c) last_changed |= out1(27, c) != out2(27, c);
  CHECK(last_changed);
}

TEST_CASE("forward on a batch preserves order") {
  Rng rng(10);
  DecoderConfig cfg;
  cfg.hidden = 16;
  cfg.layers = 2;
  auto model = CnnLstmModel<double>::init(cfg, rng);
  Tensor<double> batch({3, 1, 28, 28});
  for (auto& v : batch.data) v = uniform(rng);
  Tensor<double> out = forward(model, batch);
  REQUIRE(out.shape == Shape{3, 1, 28, 28});
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor<double> single({28, 28});
    std::copy(batch.ptr() + b * 784, batch.ptr() + (b + 1) * 784, single.ptr());
    Tensor<double> ref = forward(model, single);
    for (std::size_t i = 0; i < 784; ++i)
      CHECK(out.data[b * 784 + i] == Catch::Approx(ref.data[i]).margin(1e-12));
  }
}

TEST_CASE("baseline shape trace is symmetric") {
  Rng rng(11);
  auto model = CnnCnnBaseline<float>::init(rng);
  std::vector<Shape> want{{32, 14, 14}, {64, 7, 7}, {32, 14, 14}, {1, 28, 28}};
  CHECK(baseline_shape_trace(model) == want);
}

TEST_CASE("baseline with zero biases maps a zero image to constant 0.5") {
  Rng rng(12);
  auto model = CnnCnnBaseline<double>::init(rng);
  Tensor<double> img({28, 28});
  Tensor<double> out = baseline_forward(model, img);
  REQUIRE(out.shape == Shape{28, 28});
  for (double v : out.data) CHECK(v == 0.5);
}

TEST_CASE("baseline output lies in (0,1) for random input") {
  Rng rng(13);
  auto model = CnnCnnBaseline<float>::init(rng);
  Tensor<float> img = random_image<float>(rng);
  Tensor<float> out = baseline_forward(model, img);
  for (float v : out.data) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("reduced baseline clone passes the central-difference check") {
  // same topology on a 1@8x8 input with narrow channels
  using Id = Tape<double>::ValueId;
  Rng rng(14);
  auto rnd = [&rng](Shape s) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data) v = 0.5 * (2.0 * uniform(rng) - 1.0);
    return t;
  };
  Tensor<double> k1 = rnd({2, 1, 5, 5}), b1 = rnd({2});
  Tensor<double> k2 = rnd({3, 2, 5, 5}), b2 = rnd({3});
  Tensor<double> dk1 = rnd({3, 2, 5, 5}), db1 = rnd({2});
  Tensor<double> dk2 = rnd({2, 1, 5, 5}), db2 = rnd({1});
  Tensor<double> img({1, 1, 8, 8});
  for (auto& v : img.data) v = uniform(rng);
  Tensor<double> target({1, 1, 8, 8});
  for (auto& v : target.data) v = uniform(rng);

  auto build = [&](Tape<double>& t, const std::vector<Id>& ids) {
    auto c1 = t.activation(
        t.add_channel_bias(t.conv2d(t.constant(img), ids[0], 1, Padding::Same), ids[1]),
        Activation::Relu);
    auto p1 = t.maxpool2d(c1, 2, 2);
    auto c2 = t.activation(t.add_channel_bias(t.conv2d(p1, ids[2], 1, Padding::Same), ids[3]),
                           Activation::Relu);
    auto p2 = t.maxpool2d(c2, 2, 2);
    auto u1 = t.activation(t.add_channel_bias(t.conv2d_transpose(p2, ids[4], 2, 2, 1), ids[5]),
                           Activation::Relu);
    auto u2 = t.activation(t.add_channel_bias(t.conv2d_transpose(u1, ids[6], 2, 2, 1), ids[7]),
                           Activation::Sigmoid);
    return t.sqrt_scalar(t.scale(t.sum_squares(t.sub(u2, t.constant(target))), 1.0 / 64.0));
  };

  auto report = grad_check(build, {&k1, &b1, &k2, &b2, &dk1, &db1, &dk2, &db2});
  INFO("max relative error " << report.max_rel_error);
  CHECK(report.max_rel_error < 1e-4);
}

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "restore/layers.hh"

namespace restore {

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

/// The selected encoder architecture, fixed:
///   1@28x28 -conv 32@5x5-> 32@28x28 -pool 2x2/2-> 32@14x14
///           -conv 64@5x5-> 64@14x14 -pool 2x2/2-> 64@7x7
///           -fc 3136x100, tanh-> 100
struct EncoderConfig {
  static constexpr std::size_t image_h = 28;
  static constexpr std::size_t image_w = 28;
  static constexpr std::size_t conv1_filters = 32;
  static constexpr std::size_t conv2_filters = 64;
  static constexpr std::size_t kernel = 5;
  static constexpr std::size_t pool = 2;
  static constexpr std::size_t fc_in = 64 * 7 * 7;
  static constexpr std::size_t thought_width = 100;

  static std::size_t param_count() {
    return conv1_filters * (1 * kernel * kernel) + conv1_filters +
           conv2_filters * (conv1_filters * kernel * kernel) + conv2_filters +
           fc_in * thought_width + thought_width;
  }
};

struct DecoderConfig {
  std::size_t layers = 5;
  std::size_t hidden = 128;
  std::size_t row_width = 28;
  std::size_t thought_width = EncoderConfig::thought_width;
  Eq13Mode eq13 = Eq13Mode::OutputGate;
};

// ---------------------------------------------------------------------------
// CNN-LSTM with direct attention
// ---------------------------------------------------------------------------

template <typename S>
struct EncoderParams {
  ConvLayerParams<S> conv1, conv2;
  DenseLayerParams<S> fc;
};

template <typename S>
struct CnnLstmModel {
  EncoderParams<S> encoder;
  LstmStackParams<S> decoder;
  DecoderConfig config;

  static std::size_t expected_param_count(const DecoderConfig& cfg) {
    return EncoderConfig::param_count() +
           lstm_stack_param_count(cfg.layers, cfg.row_width, cfg.hidden, cfg.thought_width);
  }

  std::size_t param_count();

  static CnnLstmModel init(const DecoderConfig& cfg, Rng& rng) {
    CnnLstmModel m;
    m.config = cfg;
    m.encoder.conv1.kernels = Tensor<S>({EncoderConfig::conv1_filters, 1, EncoderConfig::kernel,
                                         EncoderConfig::kernel});
    glorot_fill(m.encoder.conv1.kernels, 1 * 25, EncoderConfig::conv1_filters * 25, rng);
    m.encoder.conv1.bias = Tensor<S>({EncoderConfig::conv1_filters});
    m.encoder.conv1.act = Activation::Relu;
    m.encoder.conv2.kernels =
        Tensor<S>({EncoderConfig::conv2_filters, EncoderConfig::conv1_filters,
                   EncoderConfig::kernel, EncoderConfig::kernel});
    glorot_fill(m.encoder.conv2.kernels, EncoderConfig::conv1_filters * 25,
                EncoderConfig::conv2_filters * 25, rng);
    m.encoder.conv2.bias = Tensor<S>({EncoderConfig::conv2_filters});
    m.encoder.conv2.act = Activation::Relu;
    m.encoder.fc.weights = Tensor<S>({EncoderConfig::fc_in, cfg.thought_width});
    glorot_fill(m.encoder.fc.weights, EncoderConfig::fc_in, cfg.thought_width, rng);
    m.encoder.fc.bias = Tensor<S>({cfg.thought_width});
    m.encoder.fc.act = Activation::Tanh;
    m.decoder = init_lstm_stack<S>(cfg.layers, cfg.row_width, cfg.hidden, cfg.thought_width,
                                   cfg.eq13, rng);
    if (m.param_count() != expected_param_count(cfg))
      throw Error("parameter census mismatch in CnnLstmModel construction");
    const std::vector<Shape> want{{32, 28, 28}, {32, 14, 14}, {64, 14, 14}, {64, 7, 7}, {100}};
    if (encoder_shape_trace(m.encoder) != want)
      throw Error("encoder shape trace deviates from the selected architecture");
    return m;
  }
};

template <typename S>
struct BoundEncoder {
  using Id = typename Tape<S>::ValueId;
  Id conv1_k, conv1_b, conv2_k, conv2_b, fc_w, fc_b;
  Activation conv1_act, conv2_act, fc_act;
};

template <typename S>
BoundEncoder<S> bind_params(Binder<S>& binder, EncoderParams<S>& p) {
  return BoundEncoder<S>{binder(p.conv1.kernels, "encoder.conv1.kernels", true),
                         binder(p.conv1.bias, "encoder.conv1.bias", false),
                         binder(p.conv2.kernels, "encoder.conv2.kernels", true),
                         binder(p.conv2.bias, "encoder.conv2.bias", false),
                         binder(p.fc.weights, "encoder.fc.weights", true),
                         binder(p.fc.bias, "encoder.fc.bias", false),
                         p.conv1.act,
                         p.conv2.act,
                         p.fc.act};
}

template <typename S>
struct BoundCnnLstm {
  BoundEncoder<S> encoder;
  BoundStack<S> stack;
};

template <typename S>
BoundCnnLstm<S> bind_params(Binder<S>& binder, CnnLstmModel<S>& m) {
  BoundCnnLstm<S> b;
  b.encoder = bind_params(binder, m.encoder);
  b.stack = bind_params(binder, m.decoder, "decoder");
  return b;
}

/// Per-stage outputs of the encoder pipeline, for shape-trace checks.
template <typename S>
struct EncoderStageIds {
  typename Tape<S>::ValueId conv1, pool1, conv2, pool2, thought;
};

/// Encoder forward on a batch [B,1,28,28] -> thought vectors [B,100], each
/// component in (-1,1).
template <typename S>
typename Tape<S>::ValueId encode_graph(Tape<S>& t, const BoundEncoder<S>& e,
                                       typename Tape<S>::ValueId images,
                                       EncoderStageIds<S>* stages = nullptr) {
  auto c1 = t.activation(t.add_channel_bias(t.conv2d(images, e.conv1_k, 1, Padding::Same),
                                            e.conv1_b),
                         e.conv1_act);
  auto p1 = t.maxpool2d(c1, EncoderConfig::pool, EncoderConfig::pool);
  auto c2 = t.activation(t.add_channel_bias(t.conv2d(p1, e.conv2_k, 1, Padding::Same), e.conv2_b),
                         e.conv2_act);
  auto p2 = t.maxpool2d(c2, EncoderConfig::pool, EncoderConfig::pool);
  const std::size_t batch = t.value(images).dim(0);
  auto flat = t.reshape(p2, {batch, EncoderConfig::fc_in});
  auto v = t.activation(t.add_row_bias(t.matmul(flat, e.fc_w), e.fc_b), e.fc_act);
  if (stages) *stages = EncoderStageIds<S>{c1, p1, c2, p2, v};
  return v;
}

/// Shapes produced by an actual [1,1,28,28] pass, in Table order: conv 1,
/// maxpool 1, conv 2, maxpool 2, fully connected (batch axis stripped).
template <typename S>
std::vector<Shape> encoder_shape_trace(EncoderParams<S>& params) {
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  BoundEncoder<S> enc = bind_params(binder, params);
  EncoderStageIds<S> stages;
  encode_graph(t, enc, t.constant(Tensor<S>({1, 1, EncoderConfig::image_h,
                                             EncoderConfig::image_w})),
               &stages);
  std::vector<Shape> trace;
  for (auto id : {stages.conv1, stages.pool1, stages.conv2, stages.pool2, stages.thought}) {
    Shape s = t.value(id).shape;
    trace.push_back(Shape(s.begin() + 1, s.end()));
  }
  return trace;
}

namespace detail {

/// Row t of every image in a [B,1,28,28] batch as one [B,R] tensor. Input
/// rows are graph constants; no gradient flows into the corrupted image.
template <typename S>
Tensor<S> batch_row(const Tensor<S>& images, std::size_t row) {
  const std::size_t batch = images.dim(0);
  const std::size_t w = images.shape.back();
  const std::size_t h = images.dim(images.rank() - 2);
  Tensor<S> out({batch, w});
  for (std::size_t b = 0; b < batch; ++b) {
    const S* src = images.ptr() + (b * h + row) * w;
    std::copy(src, src + w, out.ptr() + b * w);
  }
  return out;
}

}  // namespace detail

/// Unrolls the decoder over every image row. Row t of the output depends on
/// corrupted rows 1..t only (plus v), which is what the causality test pins.
template <typename S>
std::vector<typename Tape<S>::ValueId> decode_rows_graph(Tape<S>& t, const BoundStack<S>& stack,
                                                         const Tensor<S>& corrupted,
                                                         typename Tape<S>::ValueId v,
                                                         std::size_t layers, std::size_t hidden,
                                                         double dropout_rate = 0.0,
                                                         Rng* dropout_rng = nullptr) {
  const std::size_t batch = corrupted.dim(0);
  const std::size_t rows = corrupted.dim(corrupted.rank() - 2);
  const std::size_t width = corrupted.shape.back();
  StackGraphState<S> state = StackGraphState<S>::zeros(t, layers, hidden, width, batch);
  std::vector<typename Tape<S>::ValueId> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto x_t = t.constant(detail::batch_row(corrupted, r));
    out.push_back(stack_step(t, stack, x_t, state, v, dropout_rate, dropout_rng));
  }
  return out;
}

namespace detail {

template <typename S>
void check_normalized(const Tensor<S>& image) {
  for (S v : image.data)
    if (!(v >= S(0) && v <= S(1)))
      throw DataError("input image is not normalized to [0,1]");
}

/// [28,28] -> [1,1,28,28]; [B,1,28,28] passes through.
template <typename S>
Tensor<S> as_image_batch(const Tensor<S>& img) {
  if (img.rank() == 2) return img.reshaped({1, 1, img.dim(0), img.dim(1)});
  if (img.rank() == 3) return img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  return img;
}

template <typename S>
Tensor<S> rows_to_images(Tape<S>& t, const std::vector<typename Tape<S>::ValueId>& row_ids,
                         std::size_t batch, std::size_t width) {
  Tensor<S> out({batch, 1, row_ids.size(), width});
  for (std::size_t r = 0; r < row_ids.size(); ++r) {
    const Tensor<S>& y = t.value(row_ids[r]);
    for (std::size_t b = 0; b < batch; ++b)
      std::copy(y.ptr() + b * width, y.ptr() + (b + 1) * width,
                out.ptr() + (b * row_ids.size() + r) * width);
  }
  return out;
}

}  // namespace detail

/// Encoder alone: corrupted image(s) -> thought vector(s).
template <typename S>
Tensor<S> encode(CnnLstmModel<S>& model, const Tensor<S>& corrupted) {
  detail::check_normalized(corrupted);
  const bool single = corrupted.rank() == 2;
  Tensor<S> batch = detail::as_image_batch(corrupted);
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  BoundEncoder<S> enc = bind_params(binder, model.encoder);
  auto v = encode_graph(t, enc, t.constant(batch));
  Tensor<S> out = t.value(v);
  if (single) out = out.reshaped({out.dim(1)});
  return out;
}

/// Decoder alone: thought vector(s) + the same corrupted image(s) -> restored
/// image(s), every pixel in (0,1).
template <typename S>
Tensor<S> decode(CnnLstmModel<S>& model, const Tensor<S>& v, const Tensor<S>& corrupted) {
  const bool single = corrupted.rank() == 2;
  Tensor<S> batch = detail::as_image_batch(corrupted);
  Tensor<S> vm = v.rank() == 1 ? v.reshaped({1, v.numel()}) : v;
  if (vm.dim(1) != model.config.thought_width || vm.dim(0) != batch.dim(0))
    throw ShapeError("thought vector " + shape_str(v.shape) + " does not match decoder config");
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  BoundStack<S> stack = bind_params(binder, model.decoder, "decoder");
  auto rows = decode_rows_graph(t, stack, batch, t.constant(vm), model.config.layers,
                                model.config.hidden);
  Tensor<S> out = detail::rows_to_images(t, rows, batch.dim(0), batch.shape.back());
  if (single) out = out.reshaped({out.dim(2), out.dim(3)});
  return out;
}

/// Full restoration: encode then decode on the same corrupted input.
template <typename S>
Tensor<S> forward(CnnLstmModel<S>& model, const Tensor<S>& corrupted) {
  return decode(model, encode(model, corrupted), corrupted);
}

template <typename S>
std::size_t CnnLstmModel<S>::param_count() {
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  bind_params(binder, *this);
  std::size_t n = 0;
  for (const auto& b : binder.bound) n += b.tensor->numel();
  return n;
}

// ---------------------------------------------------------------------------
// CNN-CNN convolutional encoder-decoder baseline
// ---------------------------------------------------------------------------

template <typename S>
struct DeconvLayerParams {
  Tensor<S> kernels;  // [Cin,Cout,kh,kw]
  Tensor<S> bias;     // [Cout]
  Activation act = Activation::Relu;
};

/// Mirrored conv/deconv pair: 1@28x28 -> 32@14x14 -> 64@7x7 -> 32@14x14 ->
/// 1@28x28, sigmoid output. 5x5 kernels throughout; stride-2 transposed
/// convolutions (pad 2, output padding 1) invert the pooling downsampling.
template <typename S>
struct CnnCnnBaseline {
  ConvLayerParams<S> conv1, conv2;
  DeconvLayerParams<S> deconv1, deconv2;

  static constexpr std::size_t kernel = 5;
  static constexpr std::size_t up_stride = 2, up_pad = 2, up_out_pad = 1;

  static std::size_t expected_param_count() {
    return 32 * (1 * kernel * kernel) + 32 + 64 * (32 * kernel * kernel) + 64 +
           64 * 32 * kernel * kernel + 32 + 32 * 1 * kernel * kernel + 1;
  }

  std::size_t param_count();

  static CnnCnnBaseline init(Rng& rng) {
    CnnCnnBaseline m;
    m.conv1.kernels = Tensor<S>({32, 1, kernel, kernel});
    glorot_fill(m.conv1.kernels, 1 * 25, 32 * 25, rng);
    m.conv1.bias = Tensor<S>({32});
    m.conv2.kernels = Tensor<S>({64, 32, kernel, kernel});
    glorot_fill(m.conv2.kernels, 32 * 25, 64 * 25, rng);
    m.conv2.bias = Tensor<S>({64});
    m.deconv1.kernels = Tensor<S>({64, 32, kernel, kernel});
    glorot_fill(m.deconv1.kernels, 64 * 25, 32 * 25, rng);
    m.deconv1.bias = Tensor<S>({32});
    m.deconv2.kernels = Tensor<S>({32, 1, kernel, kernel});
    glorot_fill(m.deconv2.kernels, 32 * 25, 1 * 25, rng);
    m.deconv2.bias = Tensor<S>({1});
    m.deconv2.act = Activation::Sigmoid;
    if (m.param_count() != expected_param_count())
      throw Error("parameter census mismatch in CnnCnnBaseline construction");
    return m;
  }
};

template <typename S>
struct BoundBaseline {
  using Id = typename Tape<S>::ValueId;
  Id conv1_k, conv1_b, conv2_k, conv2_b, deconv1_k, deconv1_b, deconv2_k, deconv2_b;
  Activation conv1_act, conv2_act, deconv1_act, deconv2_act;
};

template <typename S>
BoundBaseline<S> bind_params(Binder<S>& binder, CnnCnnBaseline<S>& m) {
  return BoundBaseline<S>{binder(m.conv1.kernels, "conv1.kernels", true),
                          binder(m.conv1.bias, "conv1.bias", false),
                          binder(m.conv2.kernels, "conv2.kernels", true),
                          binder(m.conv2.bias, "conv2.bias", false),
                          binder(m.deconv1.kernels, "deconv1.kernels", true),
                          binder(m.deconv1.bias, "deconv1.bias", false),
                          binder(m.deconv2.kernels, "deconv2.kernels", true),
                          binder(m.deconv2.bias, "deconv2.bias", false),
                          m.conv1.act,
                          m.conv2.act,
                          m.deconv1.act,
                          m.deconv2.act};
}

template <typename S>
struct BaselineStageIds {
  typename Tape<S>::ValueId pool1, pool2, deconv1, deconv2;
};

template <typename S>
typename Tape<S>::ValueId baseline_graph(Tape<S>& t, const BoundBaseline<S>& m,
                                         typename Tape<S>::ValueId images,
                                         double dropout_rate = 0.0, Rng* dropout_rng = nullptr,
                                         BaselineStageIds<S>* stages = nullptr) {
  auto c1 = t.activation(t.add_channel_bias(t.conv2d(images, m.conv1_k, 1, Padding::Same),
                                            m.conv1_b),
                         m.conv1_act);
  auto p1 = t.maxpool2d(c1, 2, 2);
  auto c2 = t.activation(t.add_channel_bias(t.conv2d(p1, m.conv2_k, 1, Padding::Same), m.conv2_b),
                         m.conv2_act);
  auto p2 = t.maxpool2d(c2, 2, 2);
  auto bottleneck = (dropout_rng && dropout_rate > 0.0)
                        ? t.dropout(p2, dropout_rate, *dropout_rng)
                        : p2;
  auto d1 = t.activation(
      t.add_channel_bias(t.conv2d_transpose(bottleneck, m.deconv1_k, CnnCnnBaseline<S>::up_stride,
                                            CnnCnnBaseline<S>::up_pad,
                                            CnnCnnBaseline<S>::up_out_pad),
                         m.deconv1_b),
      m.deconv1_act);
  auto d2 = t.activation(
      t.add_channel_bias(t.conv2d_transpose(d1, m.deconv2_k, CnnCnnBaseline<S>::up_stride,
                                            CnnCnnBaseline<S>::up_pad,
                                            CnnCnnBaseline<S>::up_out_pad),
                         m.deconv2_b),
      m.deconv2_act);
  if (stages) *stages = BaselineStageIds<S>{p1, p2, d1, d2};
  return d2;
}

/// Shapes of an actual [1,1,28,28] pass through the baseline, batch axis
/// stripped: pool 1, pool 2, deconv 1, deconv 2.
template <typename S>
std::vector<Shape> baseline_shape_trace(CnnCnnBaseline<S>& model) {
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  BoundBaseline<S> b = bind_params(binder, model);
  BaselineStageIds<S> stages;
  baseline_graph(t, b, t.constant(Tensor<S>({1, 1, 28, 28})), 0.0, nullptr, &stages);
  std::vector<Shape> trace;
  for (auto id : {stages.pool1, stages.pool2, stages.deconv1, stages.deconv2}) {
    Shape s = t.value(id).shape;
    trace.push_back(Shape(s.begin() + 1, s.end()));
  }
  return trace;
}

template <typename S>
Tensor<S> baseline_forward(CnnCnnBaseline<S>& model, const Tensor<S>& corrupted) {
  detail::check_normalized(corrupted);
  const bool single = corrupted.rank() == 2;
  Tensor<S> batch = detail::as_image_batch(corrupted);
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  BoundBaseline<S> b = bind_params(binder, model);
  auto out = baseline_graph(t, b, t.constant(batch));
  Tensor<S> result = t.value(out);
  if (single) result = result.reshaped({result.dim(2), result.dim(3)});
  return result;
}

template <typename S>
std::size_t CnnCnnBaseline<S>::param_count() {
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  bind_params(binder, *this);
  std::size_t n = 0;
  for (const auto& b : binder.bound) n += b.tensor->numel();
  return n;
}

}  // namespace restore

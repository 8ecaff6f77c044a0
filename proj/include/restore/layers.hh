#pragma once

#include <string>
#include <utility>
#include <vector>

#include "restore/rng.hh"
#include "restore/tape.hh"

namespace restore {

/// Which gate multiplies tanh(C_t) in the final hidden state. OutputGate is
/// the standard LSTM form; PaperExact reuses the input gate instead, leaving
/// the output gate unused downstream.
enum class Eq13Mode { OutputGate, PaperExact };

inline const char* eq13_mode_name(Eq13Mode m) {
  return m == Eq13Mode::OutputGate ? "standard" : "paper-exact";
}

// ---------------------------------------------------------------------------
// Parameter structs
// ---------------------------------------------------------------------------

template <typename S>
struct ConvLayerParams {
  Tensor<S> kernels;  // [K,C,kh,kw]
  Tensor<S> bias;     // [K]
  Activation act = Activation::Relu;
};

template <typename S>
struct DenseLayerParams {
  Tensor<S> weights;  // [N,M]
  Tensor<S> bias;     // [M]
  Activation act = Activation::Tanh;
};

/// One gate of the bottom cell. The gate sees the current corrupted-image
/// row (wx), the previous hidden state (wh), the encoder's thought vector
/// (wv) and the decoder's own previous emitted row (wy).
template <typename S>
struct DirectGateParams {
  Tensor<S> wx;  // [R,H]
  Tensor<S> wh;  // [H,H]
  Tensor<S> wv;  // [V,H]
  Tensor<S> wy;  // [R,H]
  Tensor<S> b;   // [H]
};

template <typename S>
struct StandardGateParams {
  Tensor<S> wx;  // [in,H]
  Tensor<S> wh;  // [H,H]
  Tensor<S> b;   // [H]
};

template <typename S>
struct DirectAttentionLstmCellParams {
  DirectGateParams<S> input, forget, output, candidate;

  std::size_t row_width() const { return input.wx.dim(0); }
  std::size_t hidden() const { return input.wx.dim(1); }
  std::size_t thought_width() const { return input.wv.dim(0); }
};

template <typename S>
struct StandardLstmCellParams {
  StandardGateParams<S> input, forget, output, candidate;

  std::size_t input_width() const { return input.wx.dim(0); }
  std::size_t hidden() const { return input.wx.dim(1); }
};

/// Per-row output projection: y_t = sigmoid(h_t W + b). A parameter of its
/// own, distinct from the input-gate weights (the dimensions differ).
template <typename S>
struct RowProjectionParams {
  Tensor<S> weights;  // [H,R]
  Tensor<S> bias;     // [R]
};

/// Multilayer decoder parameters. Only the bottom cell receives the thought
/// vector and the output feedback; upper cells consume the hidden state of
/// the layer below; only the topmost layer owns the row projection.
template <typename S>
struct LstmStackParams {
  DirectAttentionLstmCellParams<S> bottom;
  std::vector<StandardLstmCellParams<S>> upper;
  RowProjectionParams<S> projection;
  Eq13Mode eq13 = Eq13Mode::OutputGate;

  std::size_t layer_count() const { return 1 + upper.size(); }
  std::size_t hidden() const { return bottom.hidden(); }
  std::size_t row_width() const { return bottom.row_width(); }
  std::size_t thought_width() const { return bottom.thought_width(); }
};

/// Recurrent state for host-level stepping. Initial state is all zeros,
/// including the pre-first-emission feedback row.
template <typename S>
struct LstmState {
  std::vector<Tensor<S>> hidden;  // per layer, [B,H]
  std::vector<Tensor<S>> cell;    // per layer, [B,H]
  Tensor<S> y_prev;               // [B,R]

  static LstmState zeros(std::size_t layers, std::size_t hidden_size, std::size_t row_width,
                         std::size_t batch = 1) {
    LstmState s;
    for (std::size_t l = 0; l < layers; ++l) {
      s.hidden.emplace_back(Shape{batch, hidden_size});
      s.cell.emplace_back(Shape{batch, hidden_size});
    }
    s.y_prev = Tensor<S>(Shape{batch, row_width});
    return s;
  }
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Draw order is part of the seeded-run contract: gates in (input, forget,
// output, candidate) order, matrices in declaration order within a gate.
// Biases start at zero except the forget gate, which starts at +1.

template <typename S>
DirectAttentionLstmCellParams<S> init_direct_cell(std::size_t row_width, std::size_t hidden,
                                                  std::size_t thought, Rng& rng) {
  DirectAttentionLstmCellParams<S> p;
  auto init_gate = [&](DirectGateParams<S>& g, S bias_init) {
    g.wx = Tensor<S>({row_width, hidden});
    glorot_fill(g.wx, row_width, hidden, rng);
    g.wh = Tensor<S>({hidden, hidden});
    glorot_fill(g.wh, hidden, hidden, rng);
    g.wv = Tensor<S>({thought, hidden});
    glorot_fill(g.wv, thought, hidden, rng);
    g.wy = Tensor<S>({row_width, hidden});
    glorot_fill(g.wy, row_width, hidden, rng);
    g.b = Tensor<S>::full({hidden}, bias_init);
  };
  init_gate(p.input, S(0));
  init_gate(p.forget, S(1));
  init_gate(p.output, S(0));
  init_gate(p.candidate, S(0));
  return p;
}

template <typename S>
StandardLstmCellParams<S> init_standard_cell(std::size_t input_width, std::size_t hidden,
                                             Rng& rng) {
  StandardLstmCellParams<S> p;
  auto init_gate = [&](StandardGateParams<S>& g, S bias_init) {
    g.wx = Tensor<S>({input_width, hidden});
    glorot_fill(g.wx, input_width, hidden, rng);
    g.wh = Tensor<S>({hidden, hidden});
    glorot_fill(g.wh, hidden, hidden, rng);
    g.b = Tensor<S>::full({hidden}, bias_init);
  };
  init_gate(p.input, S(0));
  init_gate(p.forget, S(1));
  init_gate(p.output, S(0));
  init_gate(p.candidate, S(0));
  return p;
}

template <typename S>
LstmStackParams<S> init_lstm_stack(std::size_t layers, std::size_t row_width, std::size_t hidden,
                                   std::size_t thought, Eq13Mode eq13, Rng& rng) {
  if (layers < 1) throw UsageError("lstm stack needs at least one layer");
  LstmStackParams<S> p;
  p.eq13 = eq13;
  p.bottom = init_direct_cell<S>(row_width, hidden, thought, rng);
  for (std::size_t l = 1; l < layers; ++l)
    p.upper.push_back(init_standard_cell<S>(hidden, hidden, rng));
  p.projection.weights = Tensor<S>({hidden, row_width});
  glorot_fill(p.projection.weights, hidden, row_width, rng);
  p.projection.bias = Tensor<S>({row_width});
  return p;
}

inline std::size_t lstm_stack_param_count(std::size_t layers, std::size_t row_width,
                                          std::size_t hidden, std::size_t thought) {
  std::size_t bottom_gate =
      row_width * hidden + hidden * hidden + thought * hidden + row_width * hidden + hidden;
  std::size_t upper_gate = hidden * hidden + hidden * hidden + hidden;
  return 4 * bottom_gate + (layers - 1) * 4 * upper_gate + hidden * row_width + row_width;
}

// ---------------------------------------------------------------------------
// Binding: persistent parameters -> tape leaves
// ---------------------------------------------------------------------------

/// Creates tape leaves for persistent parameter tensors and keeps the
/// (name, tensor, leaf) association the optimizer and L2 penalty consume.
/// Binding order is fixed and matches the checkpoint traversal order.
template <typename S>
struct Binder {
  using Id = typename Tape<S>::ValueId;
  struct Bound {
    std::string name;
    Tensor<S>* tensor;
    bool is_weight;  // L2 applies to weights, never biases
    Id id;
  };

  Tape<S>& tape;
  bool trainable = true;
  std::vector<Bound> bound;

  Id operator()(Tensor<S>& t, std::string name, bool is_weight) {
    Id id = tape.leaf(t, trainable);
    bound.push_back(Bound{std::move(name), &t, is_weight, id});
    return id;
  }
};

template <typename S>
struct BoundDirectGate {
  typename Tape<S>::ValueId wx, wh, wv, wy, b;
};
template <typename S>
struct BoundStandardGate {
  typename Tape<S>::ValueId wx, wh, b;
};
template <typename S>
struct BoundDirectCell {
  BoundDirectGate<S> input, forget, output, candidate;
};
template <typename S>
struct BoundStandardCell {
  BoundStandardGate<S> input, forget, output, candidate;
};
template <typename S>
struct BoundStack {
  BoundDirectCell<S> bottom;
  std::vector<BoundStandardCell<S>> upper;
  typename Tape<S>::ValueId proj_w, proj_b;
  Eq13Mode eq13;
};

template <typename S>
BoundDirectCell<S> bind_params(Binder<S>& binder, DirectAttentionLstmCellParams<S>& p,
                        const std::string& prefix) {
  BoundDirectCell<S> c;
  auto gate = [&](DirectGateParams<S>& g, const char* name) {
    std::string base = prefix + "." + name + ".";
    return BoundDirectGate<S>{binder(g.wx, base + "wx", true), binder(g.wh, base + "wh", true),
                              binder(g.wv, base + "wv", true), binder(g.wy, base + "wy", true),
                              binder(g.b, base + "b", false)};
  };
  c.input = gate(p.input, "input");
  c.forget = gate(p.forget, "forget");
  c.output = gate(p.output, "output");
  c.candidate = gate(p.candidate, "candidate");
  return c;
}

template <typename S>
BoundStandardCell<S> bind_params(Binder<S>& binder, StandardLstmCellParams<S>& p,
                          const std::string& prefix) {
  BoundStandardCell<S> c;
  auto gate = [&](StandardGateParams<S>& g, const char* name) {
    std::string base = prefix + "." + name + ".";
    return BoundStandardGate<S>{binder(g.wx, base + "wx", true), binder(g.wh, base + "wh", true),
                                binder(g.b, base + "b", false)};
  };
  c.input = gate(p.input, "input");
  c.forget = gate(p.forget, "forget");
  c.output = gate(p.output, "output");
  c.candidate = gate(p.candidate, "candidate");
  return c;
}

template <typename S>
BoundStack<S> bind_params(Binder<S>& binder, LstmStackParams<S>& p, const std::string& prefix) {
  BoundStack<S> s;
  s.eq13 = p.eq13;
  s.bottom = bind_params(binder, p.bottom, prefix + ".l1");
  for (std::size_t i = 0; i < p.upper.size(); ++i)
    s.upper.push_back(bind_params(binder, p.upper[i], prefix + ".l" + std::to_string(i + 2)));
  s.proj_w = binder(p.projection.weights, prefix + ".proj.weights", true);
  s.proj_b = binder(p.projection.bias, prefix + ".proj.bias", false);
  return s;
}

// ---------------------------------------------------------------------------
// Cell and stack stepping (graph form)
// ---------------------------------------------------------------------------

/// Gate pre-activations of one step, exposed for the feedback-sensitivity
/// property test.
template <typename S>
struct CellStepTrace {
  typename Tape<S>::ValueId pre_input, pre_forget, pre_output, pre_candidate;
};

namespace detail {

template <typename S>
typename Tape<S>::ValueId direct_gate_pre(Tape<S>& t, const BoundDirectGate<S>& g,
                                          typename Tape<S>::ValueId x,
                                          typename Tape<S>::ValueId h,
                                          typename Tape<S>::ValueId v,
                                          typename Tape<S>::ValueId y) {
  auto lhs = t.add(t.matmul(x, g.wx), t.matmul(h, g.wh));
  auto rhs = t.add(t.matmul(v, g.wv), t.matmul(y, g.wy));
  return t.add_row_bias(t.add(lhs, rhs), g.b);
}

template <typename S>
typename Tape<S>::ValueId standard_gate_pre(Tape<S>& t, const BoundStandardGate<S>& g,
                                            typename Tape<S>::ValueId x,
                                            typename Tape<S>::ValueId h) {
  return t.add_row_bias(t.add(t.matmul(x, g.wx), t.matmul(h, g.wh)), g.b);
}

}  // namespace detail

/// One bottom-cell step:
///   i = sigmoid(x Wx + h Wh + v Wv + y Wy + b)   (forget, output alike)
///   c~ = tanh(...)
///   C_t = C_{t-1} o f + c~ o i
///   h_t = tanh(C_t) o o        (or o i in paper-exact mode)
/// Returns (h_t, C_t).
template <typename S>
std::pair<typename Tape<S>::ValueId, typename Tape<S>::ValueId> cell_step(
    Tape<S>& t, const BoundDirectCell<S>& c, typename Tape<S>::ValueId x,
    typename Tape<S>::ValueId h_prev, typename Tape<S>::ValueId c_prev,
    typename Tape<S>::ValueId v, typename Tape<S>::ValueId y_prev, Eq13Mode mode,
    CellStepTrace<S>* trace = nullptr) {
  auto pi = detail::direct_gate_pre(t, c.input, x, h_prev, v, y_prev);
  auto pf = detail::direct_gate_pre(t, c.forget, x, h_prev, v, y_prev);
  auto po = detail::direct_gate_pre(t, c.output, x, h_prev, v, y_prev);
  auto pc = detail::direct_gate_pre(t, c.candidate, x, h_prev, v, y_prev);
  if (trace) *trace = CellStepTrace<S>{pi, pf, po, pc};
  auto gi = t.activation(pi, Activation::Sigmoid);
  auto gf = t.activation(pf, Activation::Sigmoid);
  auto go = t.activation(po, Activation::Sigmoid);
  auto cand = t.activation(pc, Activation::Tanh);
  auto c_t = t.add(t.mul(c_prev, gf), t.mul(cand, gi));
  auto gate = mode == Eq13Mode::OutputGate ? go : gi;
  auto h_t = t.mul(t.activation(c_t, Activation::Tanh), gate);
  return {h_t, c_t};
}

template <typename S>
std::pair<typename Tape<S>::ValueId, typename Tape<S>::ValueId> cell_step(
    Tape<S>& t, const BoundStandardCell<S>& c, typename Tape<S>::ValueId x,
    typename Tape<S>::ValueId h_prev, typename Tape<S>::ValueId c_prev, Eq13Mode mode) {
  auto gi = t.activation(detail::standard_gate_pre(t, c.input, x, h_prev), Activation::Sigmoid);
  auto gf = t.activation(detail::standard_gate_pre(t, c.forget, x, h_prev), Activation::Sigmoid);
  auto go = t.activation(detail::standard_gate_pre(t, c.output, x, h_prev), Activation::Sigmoid);
  auto cand =
      t.activation(detail::standard_gate_pre(t, c.candidate, x, h_prev), Activation::Tanh);
  auto c_t = t.add(t.mul(c_prev, gf), t.mul(cand, gi));
  auto gate = mode == Eq13Mode::OutputGate ? go : gi;
  auto h_t = t.mul(t.activation(c_t, Activation::Tanh), gate);
  return {h_t, c_t};
}

/// Graph-side recurrent state. y_prev carries the decoder's own previous
/// emission; gradients flow through it (no teacher forcing anywhere).
template <typename S>
struct StackGraphState {
  std::vector<std::pair<typename Tape<S>::ValueId, typename Tape<S>::ValueId>> layers;  // (h,C)
  typename Tape<S>::ValueId y_prev;

  static StackGraphState zeros(Tape<S>& t, std::size_t layers, std::size_t hidden,
                               std::size_t row_width, std::size_t batch) {
    StackGraphState s;
    for (std::size_t l = 0; l < layers; ++l)
      s.layers.emplace_back(t.constant(Tensor<S>({batch, hidden})),
                            t.constant(Tensor<S>({batch, hidden})));
    s.y_prev = t.constant(Tensor<S>({batch, row_width}));
    return s;
  }
};

/// One full decoder step: bottom cell sees (x_t, v, y_prev), upper cells see
/// the hidden state below (dropout applied there when rng given), the top
/// hidden state is projected to the emitted row. Returns y_t and stores it
/// as the next feedback row.
template <typename S>
typename Tape<S>::ValueId stack_step(Tape<S>& t, const BoundStack<S>& s,
                                     typename Tape<S>::ValueId x_t, StackGraphState<S>& state,
                                     typename Tape<S>::ValueId v, double dropout_rate = 0.0,
                                     Rng* dropout_rng = nullptr) {
  if (state.layers.empty()) throw UsageError("stack_step on uninitialized state");
  auto [h0, c0] = cell_step(t, s.bottom, x_t, state.layers[0].first, state.layers[0].second, v,
                            state.y_prev, s.eq13);
  state.layers[0] = {h0, c0};
  auto below = h0;
  for (std::size_t l = 0; l < s.upper.size(); ++l) {
    auto fed = (dropout_rng && dropout_rate > 0.0) ? t.dropout(below, dropout_rate, *dropout_rng)
                                                   : below;
    auto [h, c] =
        cell_step(t, s.upper[l], fed, state.layers[l + 1].first, state.layers[l + 1].second,
                  s.eq13);
    state.layers[l + 1] = {h, c};
    below = h;
  }
  auto y = t.activation(t.add_row_bias(t.matmul(below, s.proj_w), s.proj_b),
                        Activation::Sigmoid);
  state.y_prev = y;
  return y;
}

// ---------------------------------------------------------------------------
// Host-level wrappers (tensor in, tensor out)
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
Tensor<S> as_matrix(const Tensor<S>& t) {
  return t.rank() == 1 ? t.reshaped({1, t.numel()}) : t;
}

}  // namespace detail

/// Single cell step on plain tensors (vector or batched inputs). The graph
/// path above is the implementation; this wrapper exists for direct use and
/// oracle tests.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> cell_step(DirectAttentionLstmCellParams<S>& params,
                                          const Tensor<S>& x_t,
                                          const std::pair<Tensor<S>, Tensor<S>>& state,
                                          const Tensor<S>& v, const Tensor<S>& y_prev,
                                          Eq13Mode mode = Eq13Mode::OutputGate) {
  const bool vector_in = x_t.rank() == 1;
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  BoundDirectCell<S> cell = bind_params(binder, params, "cell");
  auto x = t.constant(detail::as_matrix(x_t));
  auto h = t.constant(detail::as_matrix(state.first));
  auto c = t.constant(detail::as_matrix(state.second));
  auto vv = t.constant(detail::as_matrix(v));
  auto y = t.constant(detail::as_matrix(y_prev));
  auto [h_t, c_t] = cell_step(t, cell, x, h, c, vv, y, mode);
  Tensor<S> ho = t.value(h_t);
  Tensor<S> co = t.value(c_t);
  if (vector_in && ho.dim(0) == 1) {
    ho = ho.reshaped({ho.dim(1)});
    co = co.reshaped({co.dim(1)});
  }
  return {ho, co};
}

/// Single stack step on plain tensors; advances `state` in place and returns
/// the emitted row (components in (0,1)).
template <typename S>
Tensor<S> stack_step(LstmStackParams<S>& params, const Tensor<S>& x_t, LstmState<S>& state,
                     const Tensor<S>& v) {
  if (state.hidden.size() != params.layer_count())
    throw ShapeError("lstm state has " + std::to_string(state.hidden.size()) +
                     " layers, params have " + std::to_string(params.layer_count()));
  const bool vector_in = x_t.rank() == 1;
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  BoundStack<S> stack = bind_params(binder, params, "stack");
  StackGraphState<S> gs;
  for (std::size_t l = 0; l < params.layer_count(); ++l)
    gs.layers.emplace_back(t.constant(detail::as_matrix(state.hidden[l])),
                           t.constant(detail::as_matrix(state.cell[l])));
  gs.y_prev = t.constant(detail::as_matrix(state.y_prev));
  auto x = t.constant(detail::as_matrix(x_t));
  auto vv = t.constant(detail::as_matrix(v));
  auto y = stack_step(t, stack, x, gs, vv);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    state.hidden[l] = t.value(gs.layers[l].first);
    state.cell[l] = t.value(gs.layers[l].second);
  }
  state.y_prev = t.value(y);
  Tensor<S> out = t.value(y);
  if (vector_in && out.dim(0) == 1) out = out.reshaped({out.dim(1)});
  return out;
}

/// Inverted dropout on a plain tensor; identity when not training.
template <typename S>
Tensor<S> dropout(const Tensor<S>& input, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw UsageError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return input;
  Tensor<S> out = input;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (S& v : out.data) v = uniform(rng) < rate ? S(0) : v * keep_scale;
  return out;
}

}  // namespace restore

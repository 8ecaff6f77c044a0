#pragma once

#include <string>
#include <vector>

#include "restore/gradcheck.hh"
#include "restore/layers.hh"
#include "restore/model.hh"

namespace restore {

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

namespace detail {

using GcId = Tape<double>::ValueId;

inline Tensor<double> gc_random(Shape shape, Rng& rng, double span = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = span * (2.0 * uniform(rng) - 1.0);
  return t;
}

/// Fixed pseudo-random projection to a scalar; plain sums can hide routing
/// errors that cancel.
inline GcId gc_project(Tape<double>& t, GcId x, unsigned seed) {
  Rng rng(seed);
  Tensor<double> w(t.value(x).shape);
  for (auto& v : w.data) v = 2.0 * uniform(rng) - 1.0;
  return t.sum(t.mul(x, t.constant(std::move(w))));
}

inline GradCheckRow gc_reduced_decoder(Eq13Mode mode, std::uint64_t seed) {
  constexpr std::size_t R = 5, H = 8, V = 4, steps = 6;
  Rng rng(seed);
  auto stack = init_lstm_stack<double>(2, R, H, V, mode, rng);

  std::vector<Tensor<double>*> params;
  for (auto* g : {&stack.bottom.input, &stack.bottom.forget, &stack.bottom.output,
                  &stack.bottom.candidate})
    for (auto* t : {&g->wx, &g->wh, &g->wv, &g->wy, &g->b}) params.push_back(t);
  for (auto* g : {&stack.upper[0].input, &stack.upper[0].forget, &stack.upper[0].output,
                  &stack.upper[0].candidate})
    for (auto* t : {&g->wx, &g->wh, &g->b}) params.push_back(t);
  params.push_back(&stack.projection.weights);
  params.push_back(&stack.projection.bias);

  Tensor<double> corrupted({1, 1, steps, R});
  for (auto& v : corrupted.data) v = uniform(rng);
  Tensor<double> thought({1, V});
  for (auto& v : thought.data) v = 2.0 * uniform(rng) - 1.0;
  Tensor<double> target({steps, R});
  for (auto& v : target.data) v = uniform(rng);

  auto build = [&](Tape<double>& t, const std::vector<GcId>& ids) {
    std::size_t n = 0;
    auto next = [&]() { return ids[n++]; };
    BoundStack<double> bound;
    bound.eq13 = mode;
    auto dgate = [&]() {
      return BoundDirectGate<double>{next(), next(), next(), next(), next()};
    };
    bound.bottom = {dgate(), dgate(), dgate(), dgate()};
    auto sgate = [&]() { return BoundStandardGate<double>{next(), next(), next()}; };
    bound.upper.push_back({sgate(), sgate(), sgate(), sgate()});
    bound.proj_w = next();
    bound.proj_b = next();

    StackGraphState<double> state = StackGraphState<double>::zeros(t, 2, H, R, 1);
    GcId v_id = t.constant(thought);
    GcId acc = t.constant(Tensor<double>({1}));
    for (std::size_t s = 0; s < steps; ++s) {
      Tensor<double> row({1, R});
      for (std::size_t i = 0; i < R; ++i) row.data[i] = corrupted(0, 0, s, i);
      GcId y = stack_step(t, bound, t.constant(row), state, v_id);
      Tensor<double> tgt({1, R});
      for (std::size_t i = 0; i < R; ++i) tgt.data[i] = target(s, i);
      acc = t.add(acc, t.sum_squares(t.sub(y, t.constant(tgt))));
    }
    return t.sqrt_scalar(t.scale(acc, 1.0 / (steps * R)));
  };
  // eps 1e-4, not the 1e-5 used for single ops: the loss sits near 0.4 here,
  // so central differences carry a ~f*ulp/(2*eps) noise floor that a smaller
  // step pushes past the 1e-8 denominator guard on near-zero-gradient
  // coordinates.
  GradCheckReport rep = grad_check(build, params, 1e-4);
  return GradCheckRow{mode == Eq13Mode::PaperExact ? "lstm-stack-paper-exact" : "lstm-stack",
                      rep.max_rel_error, rep.coordinates};
}

inline GradCheckRow gc_cell(Eq13Mode mode, std::uint64_t seed) {
  Rng rng(seed);
  auto cell = init_direct_cell<double>(4, 6, 3, rng);
  std::vector<Tensor<double>*> params;
  for (auto* g : {&cell.input, &cell.forget, &cell.output, &cell.candidate})
    for (auto* t : {&g->wx, &g->wh, &g->wv, &g->wy, &g->b}) params.push_back(t);
  Tensor<double> x = gc_random({1, 4}, rng);
  Tensor<double> h = gc_random({1, 6}, rng);
  Tensor<double> c = gc_random({1, 6}, rng);
  Tensor<double> v = gc_random({1, 3}, rng);
  Tensor<double> y = gc_random({1, 4}, rng);

  auto build = [&](Tape<double>& t, const std::vector<GcId>& ids) {
    std::size_t n = 0;
    auto next = [&]() { return ids[n++]; };
    auto dgate = [&]() {
      return BoundDirectGate<double>{next(), next(), next(), next(), next()};
    };
    BoundDirectCell<double> bound{dgate(), dgate(), dgate(), dgate()};
    auto [h_t, c_t] = cell_step(t, bound, t.constant(x), t.constant(h), t.constant(c),
                                t.constant(v), t.constant(y), mode);
    return t.add(gc_project(t, h_t, 31), gc_project(t, c_t, 32));
  };
  GradCheckReport rep = grad_check(build, params);
  return GradCheckRow{mode == Eq13Mode::PaperExact ? "lstm-cell-paper-exact" : "lstm-cell",
                      rep.max_rel_error, rep.coordinates};
}

}  // namespace detail

/// The double-precision gradient audit behind `gradcheck`: every
/// differentiable primitive plus the direct-attention cell and the reduced
/// unrolled decoder. Scope "all" runs everything; otherwise the named row.
inline std::vector<GradCheckRow> run_gradcheck_suite(const std::string& scope,
                                                     std::uint64_t seed,
                                                     Eq13Mode eq13 = Eq13Mode::OutputGate) {
  using detail::gc_project;
  using detail::gc_random;
  using Id = detail::GcId;
  std::vector<GradCheckRow> rows;
  Rng rng(seed);

  auto want = [&scope](const char* name) { return scope == "all" || scope == name; };
  auto add = [&rows](const char* name, GradCheckReport rep) {
    rows.push_back(GradCheckRow{name, rep.max_rel_error, rep.coordinates});
  };

  if (want("dense")) {
    Tensor<double> x = gc_random({4, 3}, rng), w = gc_random({3, 5}, rng),
                   b = gc_random({5}, rng);
    add("dense", grad_check(
                     [](Tape<double>& t, const std::vector<Id>& ids) {
                       return gc_project(t, t.add_row_bias(t.matmul(ids[0], ids[1]), ids[2]), 1);
                     },
                     {&x, &w, &b}));
  }
  if (want("conv2d")) {
    Tensor<double> x = gc_random({2, 2, 6, 6}, rng), k = gc_random({3, 2, 3, 3}, rng),
                   b = gc_random({3}, rng);
    add("conv2d", grad_check(
                      [](Tape<double>& t, const std::vector<Id>& ids) {
                        auto y = t.add_channel_bias(t.conv2d(ids[0], ids[1], 1, Padding::Same),
                                                    ids[2]);
                        return gc_project(t, y, 2);
                      },
                      {&x, &k, &b}));
    add("conv2d-valid", grad_check(
                            [](Tape<double>& t, const std::vector<Id>& ids) {
                              return gc_project(t, t.conv2d(ids[0], ids[1], 2, Padding::Valid), 3);
                            },
                            {&x, &k}));
  }
  if (want("maxpool2d")) {
    Tensor<double> x({1, 2, 6, 6});
    std::vector<std::size_t> order(x.numel());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, rng);  // distinct values keep the argmax stable
    for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = 0.01 * double(order[i]);
    add("maxpool2d", grad_check(
                         [](Tape<double>& t, const std::vector<Id>& ids) {
                           return gc_project(t, t.maxpool2d(ids[0], 2, 2), 4);
                         },
                         {&x}));
  }
  if (want("conv2d-transpose")) {
    Tensor<double> x = gc_random({1, 3, 4, 4}, rng), k = gc_random({3, 2, 5, 5}, rng);
    add("conv2d-transpose",
        grad_check(
            [](Tape<double>& t, const std::vector<Id>& ids) {
              return gc_project(t, t.conv2d_transpose(ids[0], ids[1], 2, 2, 1), 5);
            },
            {&x, &k}));
  }
  if (want("activations")) {
    Tensor<double> x = gc_random({3, 4}, rng, 2.0);
    for (auto& v : x.data)
      if (std::abs(v) < 1e-3) v = 0.5;  // keep relu probes off the kink
    add("relu", grad_check(
                    [](Tape<double>& t, const std::vector<Id>& ids) {
                      return gc_project(t, t.activation(ids[0], Activation::Relu), 6);
                    },
                    {&x}));
    add("sigmoid", grad_check(
                       [](Tape<double>& t, const std::vector<Id>& ids) {
                         return gc_project(t, t.activation(ids[0], Activation::Sigmoid), 7);
                       },
                       {&x}));
    add("tanh", grad_check(
                    [](Tape<double>& t, const std::vector<Id>& ids) {
                      return gc_project(t, t.activation(ids[0], Activation::Tanh), 8);
                    },
                    {&x}));
  }
  if (want("dropout")) {
    Tensor<double> x = gc_random({60}, rng);
    add("dropout", grad_check(
                       [](Tape<double>& t, const std::vector<Id>& ids) {
                         Rng mask_rng(777);  // same mask on every rebuild
                         return gc_project(t, t.dropout(ids[0], 0.25, mask_rng), 9);
                       },
                       {&x}));
  }
  if (want("loss")) {
    Tensor<double> pred = gc_random({2, 6}, rng), w = gc_random({4, 2}, rng);
    Tensor<double> target = gc_random({2, 6}, rng);
    add("rmse-plus-l2",
        grad_check(
            [&target](Tape<double>& t, const std::vector<Id>& ids) {
              auto rmse = t.sqrt_scalar(
                  t.scale(t.sum_squares(t.sub(ids[0], t.constant(target))), 1.0 / 12.0));
              auto l2 = t.scale(t.sum_squares(ids[1]), 1e-2);
              return t.add(rmse, l2);
            },
            {&pred, &w}));
  }
  if (want("lstm-cell")) rows.push_back(detail::gc_cell(eq13, seed + 1));
  if (want("lstm-stack")) rows.push_back(detail::gc_reduced_decoder(eq13, seed + 2));

  if (rows.empty()) throw UsageError("unknown gradcheck scope '" + scope + "'");
  return rows;
}

}  // namespace restore

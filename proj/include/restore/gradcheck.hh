#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "restore/tape.hh"
#include "restore/tensor.hh"

namespace restore {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Central-difference check of reverse-mode gradients, double precision only.
///
/// `build` constructs the computation from scratch on a fresh tape and
/// returns a scalar loss id: (Tape<double>&, const std::vector<ValueId>&) ->
/// ValueId, with one ValueId per entry of `inputs` (bound trainable). Builders
/// containing stochastic ops must seed their own rng per call so repeated
/// forwards agree.
///
/// Relative error per coordinate: |analytic - numeric| /
/// max(1e-8, |analytic| + |numeric|). A large result is the caller's test
/// failure, not an error here.
template <typename BuildFn>
GradCheckReport grad_check(BuildFn&& build, const std::vector<Tensor<double>*>& inputs,
                           double epsilon = 1e-5) {
  using Id = Tape<double>::ValueId;

  auto eval = [&](std::vector<Tensor<double>*> const& ins) {
    Tape<double> tape;
    std::vector<Id> ids;
    ids.reserve(ins.size());
    for (Tensor<double>* t : ins) ids.push_back(tape.leaf(*t, true));
    Id loss = build(tape, ids);
    return tape.value(loss).data[0];
  };

  // one reverse pass for the analytic gradients
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Id> ids;
    for (Tensor<double>* t : inputs) ids.push_back(tape.leaf(*t, true));
    Id loss = build(tape, ids);
    tape.backward(loss);
    for (Id id : ids) analytic.push_back(tape.grad(id));
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double>& t = *inputs[i];
    for (std::size_t c = 0; c < t.numel(); ++c) {
      const double saved = t.data[c];
      t.data[c] = saved + epsilon;
      const double up = eval(inputs);
      t.data[c] = saved - epsilon;
      const double down = eval(inputs);
      t.data[c] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i].data[c];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.coordinates;
    }
  }
  return report;
}

}  // namespace restore

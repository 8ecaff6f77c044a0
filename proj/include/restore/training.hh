#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "restore/checkpoint.hh"
#include "restore/data.hh"
#include "restore/model.hh"

namespace restore {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// sqrt((1/n) * sum (pred - target)^2) over every pixel of the batch,
/// accumulated in double.
template <typename S>
double rmse_loss(const Tensor<S>& predicted, const Tensor<S>& target) {
  if (predicted.shape != target.shape)
    throw ShapeError("rmse_loss shape mismatch: " + shape_str(predicted.shape) + " vs " +
                     shape_str(target.shape));
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.numel(); ++i) {
    const double d = double(predicted.data[i]) - double(target.data[i]);
    acc += d * d;
  }
  return std::sqrt(acc / double(predicted.numel()));
}

/// lambda * sum w^2 over the given weight tensors (biases are excluded by the
/// caller's selection).
template <typename S>
double l2_penalty(const std::vector<const Tensor<S>*>& weights, double lambda) {
  if (lambda < 0.0) throw UsageError("l2 lambda must be >= 0");
  double acc = 0.0;
  for (const Tensor<S>* w : weights)
    for (S v : w->data) acc += double(v) * double(v);
  return lambda * acc;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

template <typename S>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<S>> m, v;

  static AdamState init(const std::vector<Tensor<S>*>& params) {
    AdamState s;
    for (Tensor<S>* p : params) {
      s.m.emplace_back(p->shape);
      s.v.emplace_back(p->shape);
    }
    return s;
  }
};

/// Bias-corrected Adam update; grad_scale folds gradient clipping in without
/// copying the gradient tensors.
template <typename S>
void adam_step(AdamState<S>& state, const std::vector<Tensor<S>*>& params,
               const std::vector<const Tensor<S>*>& grads, double lr, double grad_scale = 1.0) {
  if (params.size() != state.m.size() || params.size() != grads.size())
    throw ShapeError("adam_step state/parameter count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S>& p = *params[i];
    const Tensor<S>& g = *grads[i];
    if (p.shape != g.shape)
      throw ShapeError("adam_step gradient shape " + shape_str(g.shape) +
                       " does not match parameter " + shape_str(p.shape));
    Tensor<S>& m = state.m[i];
    Tensor<S>& v = state.v[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = double(g.data[j]) * grad_scale;
      const double mj = state.beta1 * double(m.data[j]) + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * double(v.data[j]) + (1.0 - state.beta2) * gj * gj;
      m.data[j] = S(mj);
      v.data[j] = S(vj);
      p.data[j] = S(double(p.data[j]) - lr * (mj / bc1) / (std::sqrt(vj / bc2) + state.epsilon));
    }
  }
}

template <typename S>
struct AdadeltaState {
  double rho = 0.95;
  double epsilon = 1e-6;
  std::vector<Tensor<S>> acc_grad, acc_update;

  static AdadeltaState init(const std::vector<Tensor<S>*>& params) {
    AdadeltaState s;
    for (Tensor<S>* p : params) {
      s.acc_grad.emplace_back(p->shape);
      s.acc_update.emplace_back(p->shape);
    }
    return s;
  }
};

/// Running-average update with decay rho; no learning rate by construction.
template <typename S>
void adadelta_step(AdadeltaState<S>& state, const std::vector<Tensor<S>*>& params,
                   const std::vector<const Tensor<S>*>& grads, double grad_scale = 1.0) {
  if (params.size() != state.acc_grad.size() || params.size() != grads.size())
    throw ShapeError("adadelta_step state/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S>& p = *params[i];
    const Tensor<S>& g = *grads[i];
    if (p.shape != g.shape)
      throw ShapeError("adadelta_step gradient shape " + shape_str(g.shape) +
                       " does not match parameter " + shape_str(p.shape));
    Tensor<S>& eg = state.acc_grad[i];
    Tensor<S>& ed = state.acc_update[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = double(g.data[j]) * grad_scale;
      const double eg2 = state.rho * double(eg.data[j]) + (1.0 - state.rho) * gj * gj;
      const double delta =
          -std::sqrt(double(ed.data[j]) + state.epsilon) / std::sqrt(eg2 + state.epsilon) * gj;
      const double ed2 = state.rho * double(ed.data[j]) + (1.0 - state.rho) * delta * delta;
      eg.data[j] = S(eg2);
      ed.data[j] = S(ed2);
      p.data[j] = S(double(p.data[j]) + delta);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

enum class OptimizerKind { Adam, Adadelta };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "adadelta";
}

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double l2_lambda = 1e-5;  // keeps the penalty ~10% of the initial rmse
  double dropout = 0.25;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 7;
  Eq13Mode eq13 = Eq13Mode::OutputGate;
  std::size_t checkpoint_interval = 1000;
  bool clip_gradients = true;   // global-norm clip at 5.0 guards the 28-step BPTT
  double clip_norm = 5.0;
  bool record_timing = false;   // wall-clock in the CSV breaks byte reproducibility

  void validate() const {
    if (iterations == 0 || batch_size == 0) throw UsageError("iterations and batch must be >= 1");
    if (learning_rate <= 0.0) throw UsageError("learning rate must be positive");
    if (l2_lambda < 0.0) throw UsageError("l2 lambda must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must lie in [0,1)");
  }
};

struct LossRecord {
  std::size_t iteration = 0;  // 1-based
  double rmse = 0.0;
  double l2 = 0.0;
  double total = 0.0;  // rmse + l2, by construction
  double ms = 0.0;     // wall-clock; written as 0 unless timing is recorded
};

inline std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string out = "iteration,rmse,l2,total,ms\n";
  char line[192];
  for (const LossRecord& r : log) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.iteration, r.rmse, r.l2,
                  r.total, r.ms);
    out += line;
  }
  return out;
}

/// Parses the loss log back (the checkpoint embeds it so resumed runs write
/// complete CSV artifacts).
inline std::vector<LossRecord> parse_loss_log_csv(const std::string& csv) {
  std::vector<LossRecord> log;
  std::size_t pos = csv.find('\n');
  if (pos == std::string::npos) return log;
  ++pos;
  while (pos < csv.size()) {
    std::size_t end = csv.find('\n', pos);
    if (end == std::string::npos) end = csv.size();
    LossRecord r;
    if (std::sscanf(csv.c_str() + pos, "%zu,%lf,%lf,%lf,%lf", &r.iteration, &r.rmse, &r.l2,
                    &r.total, &r.ms) == 5)
      log.push_back(r);
    pos = end + 1;
  }
  return log;
}

template <typename S>
struct BuiltLoss {
  typename Tape<S>::ValueId rmse, l2, total;
  std::vector<typename Binder<S>::Bound> binding;
};

namespace detail {

template <typename S>
typename Tape<S>::ValueId l2_graph(Tape<S>& t,
                                   const std::vector<typename Binder<S>::Bound>& binding,
                                   double lambda) {
  auto acc = t.constant(Tensor<S>({1}));
  if (lambda == 0.0) return acc;
  for (const auto& b : binding)
    if (b.is_weight) acc = t.add(acc, t.sum_squares(b.id));
  return t.scale(acc, S(lambda));
}

template <typename S>
typename Tape<S>::ValueId rmse_graph(Tape<S>& t, typename Tape<S>::ValueId sum_sq,
                                     std::size_t n) {
  return t.sqrt_scalar(t.scale(sum_sq, S(1.0 / double(n))));
}

}  // namespace detail

/// Training graph for the CNN-LSTM: dropout on the thought vector and between
/// decoder layers, per-row squared error against the clean target.
template <typename S>
BuiltLoss<S> build_training_graph(Tape<S>& t, CnnLstmModel<S>& model, const Tensor<S>& corrupted,
                                  const Tensor<S>& clean, const TrainConfig& cfg,
                                  Rng* dropout_rng) {
  Binder<S> binder{t, true, {}};
  BoundCnnLstm<S> bound = bind_params(binder, model);
  auto images = t.constant(corrupted);
  auto v = encode_graph(t, bound.encoder, images);
  if (dropout_rng && cfg.dropout > 0.0) v = t.dropout(v, cfg.dropout, *dropout_rng);
  auto rows = decode_rows_graph(t, bound.stack, corrupted, v, model.config.layers,
                                model.config.hidden, cfg.dropout, dropout_rng);
  auto sum_sq = t.constant(Tensor<S>({1}));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto target = t.constant(detail::batch_row(clean, r));
    sum_sq = t.add(sum_sq, t.sum_squares(t.sub(rows[r], target)));
  }
  BuiltLoss<S> built;
  built.rmse = detail::rmse_graph(t, sum_sq, clean.numel());
  built.l2 = detail::l2_graph<S>(t, binder.bound, cfg.l2_lambda);
  built.total = t.add(built.rmse, built.l2);
  built.binding = std::move(binder.bound);
  return built;
}

/// Training graph for the CNN-CNN baseline: dropout at the bottleneck.
template <typename S>
BuiltLoss<S> build_training_graph(Tape<S>& t, CnnCnnBaseline<S>& model,
                                  const Tensor<S>& corrupted, const Tensor<S>& clean,
                                  const TrainConfig& cfg, Rng* dropout_rng) {
  Binder<S> binder{t, true, {}};
  BoundBaseline<S> bound = bind_params(binder, model);
  auto out = baseline_graph(t, bound, t.constant(corrupted), cfg.dropout, dropout_rng);
  auto sum_sq = t.sum_squares(t.sub(out, t.constant(clean)));
  BuiltLoss<S> built;
  built.rmse = detail::rmse_graph(t, sum_sq, clean.numel());
  built.l2 = detail::l2_graph<S>(t, binder.bound, cfg.l2_lambda);
  built.total = t.add(built.rmse, built.l2);
  built.binding = std::move(binder.bound);
  return built;
}

template <typename S>
constexpr ModelKind model_kind_of(const CnnLstmModel<S>&) {
  return ModelKind::CnnLstm;
}
template <typename S>
constexpr ModelKind model_kind_of(const CnnCnnBaseline<S>&) {
  return ModelKind::CnnCnn;
}

/// Stores all model parameters into a checkpoint under their binding names.
template <typename S, typename Model>
void put_model_tensors(CheckpointData& ckpt, Model& model) {
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  bind_params(binder, model);
  for (const auto& b : binder.bound) ckpt.add_tensor(b.name, *b.tensor);
}

/// Loads parameters back; every binding name must be present with its shape.
template <typename S, typename Model>
void load_model_tensors(const CheckpointData& ckpt, Model& model) {
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  bind_params(binder, model);
  for (const auto& b : binder.bound) {
    Tensor<S> stored = ckpt.template tensor<S>(b.name);
    if (stored.shape != b.tensor->shape)
      throw DataError("checkpoint tensor " + b.name + " has shape " + shape_str(stored.shape) +
                      ", model expects " + shape_str(b.tensor->shape));
    *b.tensor = std::move(stored);
  }
}

struct TrainResult {
  std::vector<LossRecord> log;            // complete, including pre-resume rows
  std::vector<std::string> checkpoints;   // paths written, final one last
  std::size_t start_iteration = 0;        // rows after this index were produced now
};

/// Runs the training protocol: draw batch, forward, total = rmse + l2,
/// backward, clip, optimizer step, log; checkpoints at the configured
/// interval and at the end. A non-finite loss aborts with a diagnostic
/// checkpoint. Dropout is active only here.
template <typename S, typename Model>
class Trainer {
 public:
  Trainer(Model& model, BatchStream<S>& stream, TrainConfig cfg, std::string config_json,
          std::string checkpoint_dir)
      : model_(model),
        stream_(stream),
        cfg_(cfg),
        config_json_(std::move(config_json)),
        dir_(std::move(checkpoint_dir)),
        dropout_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
    cfg_.validate();
    collect_params();
    if (cfg_.optimizer == OptimizerKind::Adam)
      adam_ = AdamState<S>::init(params_);
    else
      adadelta_ = AdadeltaState<S>::init(params_);
  }

  /// Restores parameters, optimizer, rng and stream state so that continuing
  /// reproduces an uninterrupted run bit for bit.
  void resume(const CheckpointData& ckpt) {
    load_model_tensors<S>(ckpt, model_);
    collect_params();
    if (ckpt.blob("opt.kind") != optimizer_name(cfg_.optimizer))
      throw DataError("checkpoint optimizer does not match the configured one");
    if (cfg_.optimizer == OptimizerKind::Adam) {
      adam_ = AdamState<S>::init(params_);
      adam_->step = std::stoull(ckpt.blob("opt.step"));
      for (std::size_t i = 0; i < params_.size(); ++i) {
        adam_->m[i] = ckpt.template tensor<S>("opt.m." + names_[i]);
        adam_->v[i] = ckpt.template tensor<S>("opt.v." + names_[i]);
      }
    } else {
      adadelta_ = AdadeltaState<S>::init(params_);
      for (std::size_t i = 0; i < params_.size(); ++i) {
        adadelta_->acc_grad[i] = ckpt.template tensor<S>("opt.eg2." + names_[i]);
        adadelta_->acc_update[i] = ckpt.template tensor<S>("opt.ed2." + names_[i]);
      }
    }
    dropout_rng_ = rng_from_state_string(ckpt.blob("train.rng"));
    typename BatchStream<S>::State stream_state;
    stream_state.rng = ckpt.blob("stream.rng");
    stream_state.cursor = std::stoull(ckpt.blob("stream.cursor"));
    const std::string perm = ckpt.blob("stream.permutation");
    stream_state.permutation.resize(perm.size() / 4);
    std::memcpy(stream_state.permutation.data(), perm.data(), perm.size());
    stream_.set_state(stream_state);
    log_ = parse_loss_log_csv(ckpt.blob("train.log_csv"));
    iteration_ = std::stoull(ckpt.blob("train.iteration"));
  }

  TrainResult run() {
    TrainResult result;
    result.start_iteration = iteration_;
    while (iteration_ < cfg_.iterations) {
      step();
      if (!dir_.empty() &&
          (iteration_ % cfg_.checkpoint_interval == 0 || iteration_ == cfg_.iterations))
        result.checkpoints.push_back(write_checkpoint("checkpoint-" +
                                                      std::to_string(iteration_) + ".rstf"));
    }
    result.log = log_;
    return result;
  }

  const std::vector<LossRecord>& log() const { return log_; }

 private:
  void collect_params() {
    Tape<S> t;
    Binder<S> binder{t, false, {}};
    bind_params(binder, model_);
    params_.clear();
    names_.clear();
    for (const auto& b : binder.bound) {
      params_.push_back(b.tensor);
      names_.push_back(b.name);
    }
  }

  void step() {
    const auto t0 = std::chrono::steady_clock::now();
    ++iteration_;
    auto [corrupted, clean] = pack_batch(stream_.next());

    Tape<S> tape;
    Rng* drop = cfg_.dropout > 0.0 ? &dropout_rng_ : nullptr;
    BuiltLoss<S> built = build_training_graph(tape, model_, corrupted, clean, cfg_, drop);
    const double rmse = double(tape.value(built.rmse).data[0]);
    const double l2 = double(tape.value(built.l2).data[0]);
    if (!std::isfinite(rmse) || !std::isfinite(l2)) {
      if (!dir_.empty()) write_checkpoint("diagnostic-nonfinite.rstf");
      throw NumericError("non-finite loss at iteration " + std::to_string(iteration_) +
                         (dir_.empty() ? "" : " (diagnostic checkpoint written)"));
    }
    tape.backward(built.total);

    std::vector<const Tensor<S>*> grads;
    grads.reserve(built.binding.size());
    double norm_sq = 0.0;
    for (const auto& b : built.binding) {
      const Tensor<S>& g = tape.grad(b.id);
      grads.push_back(&g);
      for (S v : g.data) norm_sq += double(v) * double(v);
    }
    double scale = 1.0;
    if (cfg_.clip_gradients) {
      const double norm = std::sqrt(norm_sq);
      if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    if (cfg_.optimizer == OptimizerKind::Adam)
      adam_step(*adam_, params_, grads, cfg_.learning_rate, scale);
    else
      adadelta_step(*adadelta_, params_, grads, scale);

    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log_.push_back(LossRecord{iteration_, rmse, l2, rmse + l2, cfg_.record_timing ? ms : 0.0});
  }

  std::string write_checkpoint(const std::string& filename) {
    CheckpointData ckpt;
    ckpt.model_kind = model_kind_of(model_);
    ckpt.scalar_width = sizeof(S);
    ckpt.config_json = config_json_;
    put_model_tensors<S>(ckpt, model_);
    ckpt.add_blob("opt.kind", optimizer_name(cfg_.optimizer));
    if (cfg_.optimizer == OptimizerKind::Adam) {
      ckpt.add_blob("opt.step", std::to_string(adam_->step));
      for (std::size_t i = 0; i < params_.size(); ++i) {
        ckpt.add_tensor("opt.m." + names_[i], adam_->m[i]);
        ckpt.add_tensor("opt.v." + names_[i], adam_->v[i]);
      }
    } else {
      for (std::size_t i = 0; i < params_.size(); ++i) {
        ckpt.add_tensor("opt.eg2." + names_[i], adadelta_->acc_grad[i]);
        ckpt.add_tensor("opt.ed2." + names_[i], adadelta_->acc_update[i]);
      }
    }
    ckpt.add_blob("init.scheme", "glorot-uniform(fan_in+fan_out), biases 0, forget-gate bias +1");
    ckpt.add_blob("train.rng", rng_state_string(dropout_rng_));
    const auto stream_state = stream_.state();
    ckpt.add_blob("stream.rng", stream_state.rng);
    ckpt.add_blob("stream.cursor", std::to_string(stream_state.cursor));
    std::string perm(reinterpret_cast<const char*>(stream_state.permutation.data()),
                     stream_state.permutation.size() * 4);
    ckpt.add_blob("stream.permutation", perm);
    ckpt.add_blob("train.iteration", std::to_string(iteration_));
    ckpt.add_blob("train.log_csv", loss_log_csv(log_));

    std::filesystem::create_directories(dir_);
    std::string path = (std::filesystem::path(dir_) / filename).string();
    save_checkpoint(path, ckpt);
    return path;
  }

  Model& model_;
  BatchStream<S>& stream_;
  TrainConfig cfg_;
  std::string config_json_;
  std::string dir_;
  Rng dropout_rng_;
  std::size_t iteration_ = 0;
  std::vector<Tensor<S>*> params_;
  std::vector<std::string> names_;
  std::optional<AdamState<S>> adam_;
  std::optional<AdadeltaState<S>> adadelta_;
  std::vector<LossRecord> log_;
};

/// Weight tensors of a model (for the L2 surface and its tests).
template <typename S, typename Model>
std::vector<const Tensor<S>*> weight_tensors(Model& model) {
  Tape<S> t;
  Binder<S> binder{t, false, {}};
  bind_params(binder, model);
  std::vector<const Tensor<S>*> out;
  for (const auto& b : binder.bound)
    if (b.is_weight) out.push_back(b.tensor);
  return out;
}

}  // namespace restore

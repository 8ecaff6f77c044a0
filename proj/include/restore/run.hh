#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "restore/digits.hh"
#include "restore/evaluation.hh"
#include "restore/training.hh"

namespace restore {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything a training run depends on, with JSON keys mirroring the CLI
/// flags one to one so a manifest re-ingests as a flag set.
struct RunSpec {
  std::string model = "cnn-lstm";  // cnn-lstm | cnn-cnn
  DecoderConfig decoder;
  TrainConfig train;
  CorruptionSpec corruption;
  std::uint64_t split_seed = 0;
  std::size_t limit_images = 0;  // cap on the training pool; 0 keeps all

  void validate() const {
    if (model != "cnn-lstm" && model != "cnn-cnn")
      throw UsageError("unknown model tag '" + model + "' (valid: cnn-lstm, cnn-cnn)");
    train.validate();
    corruption.validate();
  }
};

inline nlohmann::json to_json(const RunSpec& s) {
  return nlohmann::json{{"model", s.model},
                        {"hidden", s.decoder.hidden},
                        {"layers", s.decoder.layers},
                        {"eq13", eq13_mode_name(s.decoder.eq13)},
                        {"iterations", s.train.iterations},
                        {"batch", s.train.batch_size},
                        {"lr", s.train.learning_rate},
                        {"l2", s.train.l2_lambda},
                        {"dropout", s.train.dropout},
                        {"optimizer", optimizer_name(s.train.optimizer)},
                        {"seed", s.train.seed},
                        {"checkpoint-interval", s.train.checkpoint_interval},
                        {"clip", s.train.clip_gradients},
                        {"clip-norm", s.train.clip_norm},
                        {"timing", s.train.record_timing},
                        {"density", s.corruption.noise_density},
                        {"blank-start", s.corruption.blank_row_start},
                        {"blank-end", s.corruption.blank_row_end},
                        {"split-seed", s.split_seed},
                        {"limit", s.limit_images}};
}

inline RunSpec run_spec_from_json(const nlohmann::json& j) {
  RunSpec s;
  s.model = j.at("model").get<std::string>();
  s.decoder.hidden = j.at("hidden").get<std::size_t>();
  s.decoder.layers = j.at("layers").get<std::size_t>();
  s.decoder.eq13 = j.at("eq13").get<std::string>() == "paper-exact" ? Eq13Mode::PaperExact
                                                                    : Eq13Mode::OutputGate;
  s.train.iterations = j.at("iterations").get<std::size_t>();
  s.train.batch_size = j.at("batch").get<std::size_t>();
  s.train.learning_rate = j.at("lr").get<double>();
  s.train.l2_lambda = j.at("l2").get<double>();
  s.train.dropout = j.at("dropout").get<double>();
  s.train.optimizer = j.at("optimizer").get<std::string>() == "adadelta" ? OptimizerKind::Adadelta
                                                                         : OptimizerKind::Adam;
  s.train.seed = j.at("seed").get<std::uint64_t>();
  s.train.checkpoint_interval = j.at("checkpoint-interval").get<std::size_t>();
  s.train.clip_gradients = j.at("clip").get<bool>();
  s.train.clip_norm = j.at("clip-norm").get<double>();
  s.train.record_timing = j.at("timing").get<bool>();
  s.train.eq13 = s.decoder.eq13;
  s.corruption.noise_density = j.at("density").get<double>();
  s.corruption.blank_row_start = j.at("blank-start").get<std::size_t>();
  s.corruption.blank_row_end = j.at("blank-end").get<std::size_t>();
  s.split_seed = j.at("split-seed").get<std::uint64_t>();
  s.limit_images = j.at("limit").get<std::size_t>();
  return s;
}

struct RunArtifacts {
  std::vector<LossRecord> log;
  std::vector<std::string> checkpoints;
  std::string final_checkpoint;
  std::string loss_csv_path;
  std::string manifest_path;
};

namespace detail {

inline std::vector<std::uint32_t> training_pool(const MnistSet& set, const RunSpec& spec) {
  Split s = split(set, SplitSpec{0.75, spec.split_seed});
  std::vector<std::uint32_t> pool = s.train;
  if (spec.limit_images > 0 && spec.limit_images < pool.size())
    pool.resize(spec.limit_images);
  return pool;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

template <typename S, typename Model>
RunArtifacts drive_training(Model& model, const MnistSet& set, const RunSpec& spec,
                            const std::string& out_dir, const std::string& source_path,
                            const CheckpointData* resume_from) {
  std::filesystem::create_directories(out_dir);
  RunArtifacts art;
  art.loss_csv_path = (std::filesystem::path(out_dir) / "loss.csv").string();
  art.manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();

  // the manifest is on disk before the first iteration runs
  nlohmann::json manifest{{"tool_version", kToolVersion},
                          {"config", to_json(spec)},
                          {"input", {{"path", source_path},
                                     {"crc32", set.checksum},
                                     {"images", set.count}}},
                          {"artifacts", {{"loss_csv", art.loss_csv_path},
                                         {"checkpoint_dir", out_dir}}},
                          {"resumed", resume_from != nullptr}};
  write_text(art.manifest_path, manifest.dump(2) + "\n");

  BatchStream<S> stream(set, training_pool(set, spec), spec.train.batch_size, spec.corruption,
                        spec.train.seed);
  Trainer<S, Model> trainer(model, stream, spec.train, to_json(spec).dump(), out_dir);
  if (resume_from) trainer.resume(*resume_from);
  TrainResult result = trainer.run();
  art.log = result.log;
  art.checkpoints = result.checkpoints;
  if (!art.checkpoints.empty()) art.final_checkpoint = art.checkpoints.back();
  write_text(art.loss_csv_path, loss_log_csv(art.log));
  return art;
}

}  // namespace detail

/// Trains a fresh model per the run spec (single precision, the training default).
inline RunArtifacts run_training(const MnistSet& set, const RunSpec& spec,
                                 const std::string& out_dir, const std::string& source_path) {
  spec.validate();
  Rng init_rng(spec.train.seed);
  if (spec.model == "cnn-lstm") {
    auto model = CnnLstmModel<float>::init(spec.decoder, init_rng);
    return detail::drive_training<float>(model, set, spec, out_dir, source_path, nullptr);
  }
  auto model = CnnCnnBaseline<float>::init(init_rng);
  return detail::drive_training<float>(model, set, spec, out_dir, source_path, nullptr);
}

/// Resumes from a checkpoint; the run spec is read back from the config echo.
inline RunArtifacts resume_training(const MnistSet& set, const CheckpointData& ckpt,
                                    const std::string& out_dir, const std::string& source_path) {
  RunSpec spec = run_spec_from_json(nlohmann::json::parse(ckpt.config_json));
  spec.validate();
  Rng init_rng(spec.train.seed);
  if (spec.model == "cnn-lstm") {
    auto model = CnnLstmModel<float>::init(spec.decoder, init_rng);
    return detail::drive_training<float>(model, set, spec, out_dir, source_path, &ckpt);
  }
  auto model = CnnCnnBaseline<float>::init(init_rng);
  return detail::drive_training<float>(model, set, spec, out_dir, source_path, &ckpt);
}

/// Held-out clean images per the checkpoint's own split seed, so evaluation
/// never touches the pool the model trained on.
inline std::vector<Tensor<float>> held_out_images(const MnistSet& set, const RunSpec& spec,
                                                  std::size_t n) {
  Split s = split(set, SplitSpec{0.75, spec.split_seed});
  if (n == 0 || n > s.test.size()) n = s.test.size();
  std::vector<Tensor<float>> imgs;
  imgs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) imgs.push_back(normalize<float>(set.image(s.test[i])));
  return imgs;
}

/// Restoration closure over the model stored in a checkpoint.
inline BatchRestorer<float> restorer_from_checkpoint(const CheckpointData& ckpt) {
  RunSpec spec = run_spec_from_json(nlohmann::json::parse(ckpt.config_json));
  Rng rng(spec.train.seed);
  if (ckpt.model_kind == ModelKind::CnnLstm) {
    auto model =
        std::make_shared<CnnLstmModel<float>>(CnnLstmModel<float>::init(spec.decoder, rng));
    load_model_tensors<float>(ckpt, *model);
    return [model](const Tensor<float>& batch) { return forward(*model, batch); };
  }
  auto model = std::make_shared<CnnCnnBaseline<float>>(CnnCnnBaseline<float>::init(rng));
  load_model_tensors<float>(ckpt, *model);
  return [model](const Tensor<float>& batch) { return baseline_forward(*model, batch); };
}

/// Loads the model a checkpoint describes and evaluates it on the held-out
/// split with a fixed corruption seed.
inline EvalReport evaluate_checkpoint(const CheckpointData& ckpt, const MnistSet& set,
                                      std::uint64_t corruption_seed, std::size_t n,
                                      std::size_t threads = 1) {
  RunSpec spec = run_spec_from_json(nlohmann::json::parse(ckpt.config_json));
  CorruptionSpec corr = spec.corruption;
  corr.seed = corruption_seed;
  std::vector<Tensor<float>> imgs = held_out_images(set, spec, n);
  if (ckpt.model_kind == ModelKind::CnnLstm) {
    Rng rng(spec.train.seed);
    auto model = CnnLstmModel<float>::init(spec.decoder, rng);
    load_model_tensors<float>(ckpt, model);
    return evaluate(restorer(model), imgs, corr, "cnn-lstm", 64, threads);
  }
  Rng rng(spec.train.seed);
  auto model = CnnCnnBaseline<float>::init(rng);
  load_model_tensors<float>(ckpt, model);
  return evaluate(restorer(model), imgs, corr, "cnn-cnn", 64, threads);
}

}  // namespace restore

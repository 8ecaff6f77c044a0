// Command-line front end: data corruption previews, training, evaluation,
// model comparison, gradient checking and restoration-grid export.
//
// Exit codes: 0 success, 1 usage, 2 data/format error, 3 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>

#include "restore/gradcheck_suite.hh"
#include "restore/run.hh"

namespace {

using namespace restore;

std::string resolve_idx_path(std::string idx) {
  if (!idx.empty()) return idx;
  const char* dir = std::getenv("RESTORE_DATA_DIR");
  if (!dir)
    throw UsageError("no --idx given and RESTORE_DATA_DIR is not set");
  for (const char* name : {"train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"}) {
    auto p = std::filesystem::path(dir) / name;
    if (std::filesystem::exists(p)) return p.string();
  }
  throw DataError(std::string("no IDX image file found under ") + dir);
}

std::string default_run_dir(std::uint64_t seed) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now).count();
  return "runs/" + std::to_string(secs) + "-seed" + std::to_string(seed);
}

struct CorruptArgs {
  std::string idx, out = "corrupt-preview";
  std::size_t n = 4;
  CorruptionSpec spec;
};

int cmd_corrupt(const CorruptArgs& a) {
  MnistSet set = load_idx(resolve_idx_path(a.idx));
  std::filesystem::create_directories(a.out);
  nlohmann::json manifest{{"tool_version", kToolVersion},
                          {"density", a.spec.noise_density},
                          {"blank-start", a.spec.blank_row_start},
                          {"blank-end", a.spec.blank_row_end},
                          {"seed", a.spec.seed},
                          {"n", a.n},
                          {"input", {{"crc32", set.checksum}, {"images", set.count}}}};
  std::ofstream((std::filesystem::path(a.out) / "manifest.json").string())
      << manifest.dump(2) << "\n";
  Rng rng(a.spec.seed);
  char name[64];
  for (std::size_t i = 0; i < a.n && i < set.count; ++i) {
    Tensor<float> clean = normalize<float>(set.image(i));
    Tensor<float> corrupted = corrupt(clean, a.spec, rng);
    std::snprintf(name, sizeof name, "clean_%03zu.pgm", i);
    write_pgm((std::filesystem::path(a.out) / name).string(), clean);
    std::snprintf(name, sizeof name, "corrupted_%03zu.pgm", i);
    write_pgm((std::filesystem::path(a.out) / name).string(), corrupted);
  }
  std::printf("wrote %zu pair(s) and manifest to %s\n", std::min(a.n, set.count),
              a.out.c_str());
  return 0;
}

struct TrainArgs {
  RunSpec spec;
  std::string idx, out, resume, eq13 = "standard", optimizer = "adam";
  bool no_clip = false;
  std::size_t threads = 1;
};

int cmd_train(TrainArgs& a) {
  a.spec.decoder.eq13 =
      a.eq13 == "paper-exact" ? Eq13Mode::PaperExact : Eq13Mode::OutputGate;
  a.spec.train.eq13 = a.spec.decoder.eq13;
  a.spec.train.optimizer =
      a.optimizer == "adadelta" ? OptimizerKind::Adadelta : OptimizerKind::Adam;
  a.spec.train.clip_gradients = !a.no_clip;
  a.spec.validate();
  if (a.spec.train.iterations * a.spec.train.batch_size >= 10'000'000ull)
    std::fprintf(stderr,
                 "warning: %zu iterations at batch %zu is the full-scale protocol; "
                 "expect this to run for hours on one CPU core\n",
                 a.spec.train.iterations, a.spec.train.batch_size);

  const std::string idx_path = resolve_idx_path(a.idx);
  MnistSet set = load_idx(idx_path);
  const std::string out = a.out.empty() ? default_run_dir(a.spec.train.seed) : a.out;

  RunArtifacts art;
  if (!a.resume.empty()) {
    CheckpointData ckpt = load_checkpoint(a.resume);
    art = resume_training(set, ckpt, out, idx_path);
  } else {
    art = run_training(set, a.spec, out, idx_path);
  }
  std::printf("run directory: %s\n", out.c_str());
  std::printf("loss log:      %s (%zu rows)\n", art.loss_csv_path.c_str(), art.log.size());
  if (!art.final_checkpoint.empty())
    std::printf("checkpoint:    %s\n", art.final_checkpoint.c_str());
  if (!art.log.empty())
    std::printf("final rmse:    %.6f\n", art.log.back().rmse);
  return 0;
}

struct EvalArgs {
  std::string ckpt, idx, out = "eval_report.csv";
  std::uint64_t seed = 1;
  std::size_t n = 0;  // 0 = whole held-out split
  std::size_t threads = 1;
};

int cmd_eval(const EvalArgs& a) {
  CheckpointData ckpt = load_checkpoint(a.ckpt);
  MnistSet set = load_idx(resolve_idx_path(a.idx));
  EvalReport rep = evaluate_checkpoint(ckpt, set, a.seed, a.n, a.threads);
  std::ofstream(a.out) << eval_report_csv_header() << eval_report_csv_row(rep);
  std::fputs(eval_report_table({rep}).c_str(), stdout);
  std::printf("report csv: %s\n", a.out.c_str());
  return 0;
}

struct CompareArgs {
  std::string ckpt_a, ckpt_b, idx, out = "compare-out";
  std::uint64_t seed = 1;
  std::size_t n = 500;
  std::size_t grid_n = 8;
  std::size_t threads = 1;
};

int cmd_compare(const CompareArgs& a) {
  CheckpointData ca = load_checkpoint(a.ckpt_a);
  CheckpointData cb = load_checkpoint(a.ckpt_b);
  MnistSet set = load_idx(resolve_idx_path(a.idx));

  // both runs must agree on the held-out partition and the corruption they
  // were trained against, or the comparison is between different corpora
  RunSpec sa = run_spec_from_json(nlohmann::json::parse(ca.config_json));
  RunSpec sb = run_spec_from_json(nlohmann::json::parse(cb.config_json));
  if (sa.split_seed != sb.split_seed || sa.corruption.noise_density != sb.corruption.noise_density ||
      sa.corruption.blank_row_start != sb.corruption.blank_row_start ||
      sa.corruption.blank_row_end != sb.corruption.blank_row_end)
    throw DataError("checkpoints were trained against different corpora (split seed or "
                    "corruption settings differ); refusing to compare");

  EvalReport ra = evaluate_checkpoint(ca, set, a.seed, a.n, a.threads);
  EvalReport rb = evaluate_checkpoint(cb, set, a.seed, a.n, a.threads);
  Comparison cmp = compare(ra, rb);

  std::filesystem::create_directories(a.out);
  std::ofstream((std::filesystem::path(a.out) / "comparison.csv").string())
      << eval_report_csv_header() << eval_report_csv_row(ra) << eval_report_csv_row(rb);
  std::fputs(cmp.text_table().c_str(), stdout);

  // grid over the first grid_n held-out images; the rng draw order makes this
  // prefix identical to what evaluation saw
  RunSpec spec_a = run_spec_from_json(nlohmann::json::parse(ca.config_json));
  CorruptionSpec corr = spec_a.corruption;
  corr.seed = a.seed;
  std::vector<Tensor<float>> clean = held_out_images(set, spec_a, a.grid_n);
  Rng rng(corr.seed);
  std::vector<Tensor<float>> corrupted;
  for (const auto& img : clean) corrupted.push_back(corrupt(img, corr, rng));

  auto restore_a = restorer_from_checkpoint(ca);
  auto restore_b = restorer_from_checkpoint(cb);
  std::vector<Tensor<float>> out_a, out_b;
  for (const auto& img : corrupted) {
    Tensor<float> batch = img.reshaped({1, 1, 28, 28});
    out_a.push_back(restore_a(batch).reshaped({28, 28}));
    out_b.push_back(restore_b(batch).reshaped({28, 28}));
  }
  const std::string grid_path = (std::filesystem::path(a.out) / "grid.pgm").string();
  export_grid(corrupted, out_a, out_b, clean, grid_path);
  std::printf("grid:       %s (input | %s | %s | original)\n", grid_path.c_str(),
              ra.model_tag.c_str(), rb.model_tag.c_str());
  return 0;
}

struct GradcheckArgs {
  std::string scope = "all", eq13 = "standard";
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  Eq13Mode mode = a.eq13 == "paper-exact" ? Eq13Mode::PaperExact : Eq13Mode::OutputGate;
  std::vector<GradCheckRow> rows = run_gradcheck_suite(a.scope, a.seed, mode);
  bool ok = true;
  std::printf("%-24s %14s %8s  %s\n", "op", "max_rel_error", "coords", "status");
  for (const GradCheckRow& r : rows) {
    const bool pass = r.max_rel_error < 1e-4;
    ok = ok && pass;
    std::printf("%-24s %14.3e %8zu  %s\n", r.name.c_str(), r.max_rel_error, r.coordinates,
                pass ? "PASS" : "FAIL");
  }
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CNN-LSTM image restoration toolkit"};
  app.set_version_flag("--version", restore::kToolVersion);
  app.require_subcommand(1);

  CorruptArgs corrupt_args;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Export corruption previews as PGM pairs");
  corrupt_cmd->add_option("--idx", corrupt_args.idx, "IDX image file (or RESTORE_DATA_DIR)");
  corrupt_cmd->add_option("--out", corrupt_args.out, "Output directory");
  corrupt_cmd->add_option("--n", corrupt_args.n, "Number of preview pairs");
  corrupt_cmd->add_option("--density", corrupt_args.spec.noise_density, "Salt-and-pepper density");
  corrupt_cmd->add_option("--blank-start", corrupt_args.spec.blank_row_start, "First blanked row");
  corrupt_cmd->add_option("--blank-end", corrupt_args.spec.blank_row_end, "Last blanked row");
  corrupt_cmd->add_option("--seed", corrupt_args.spec.seed, "Noise seed");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints + loss CSV");
  train_cmd->add_option("model", train_args.spec.model, "cnn-lstm or cnn-cnn")->required();
  train_cmd->add_option("--idx", train_args.idx, "IDX image file (or RESTORE_DATA_DIR)");
  train_cmd->add_option("--out", train_args.out, "Run directory (default runs/<time>-seed<seed>)");
  train_cmd->add_option("--iterations", train_args.spec.train.iterations, "Training iterations");
  train_cmd->add_option("--batch", train_args.spec.train.batch_size, "Batch size");
  train_cmd->add_option("--lr", train_args.spec.train.learning_rate, "Adam learning rate");
  train_cmd->add_option("--l2", train_args.spec.train.l2_lambda, "L2 lambda");
  train_cmd->add_option("--dropout", train_args.spec.train.dropout, "Dropout rate");
  train_cmd->add_option("--optimizer", train_args.optimizer, "adam or adadelta")
      ->check(CLI::IsMember({"adam", "adadelta"}));
  train_cmd->add_option("--seed", train_args.spec.train.seed, "Run seed");
  train_cmd->add_option("--eq13", train_args.eq13, "standard or paper-exact")
      ->check(CLI::IsMember({"standard", "paper-exact"}));
  train_cmd->add_option("--hidden", train_args.spec.decoder.hidden, "Decoder hidden size");
  train_cmd->add_option("--layers", train_args.spec.decoder.layers, "Decoder layer count");
  train_cmd->add_option("--checkpoint-interval", train_args.spec.train.checkpoint_interval,
                        "Iterations between checkpoints");
  train_cmd->add_option("--limit", train_args.spec.limit_images,
                        "Cap the training pool (0 = all)");
  train_cmd->add_option("--split-seed", train_args.spec.split_seed, "75/25 split seed");
  train_cmd->add_option("--density", train_args.spec.corruption.noise_density,
                        "Salt-and-pepper density");
  train_cmd->add_option("--blank-start", train_args.spec.corruption.blank_row_start,
                        "First blanked row");
  train_cmd->add_option("--blank-end", train_args.spec.corruption.blank_row_end,
                        "Last blanked row");
  train_cmd->add_flag("--no-clip", train_args.no_clip, "Disable gradient clipping");
  train_cmd->add_option("--clip-norm", train_args.spec.train.clip_norm, "Clip threshold");
  train_cmd->add_flag("--timing", train_args.spec.train.record_timing,
                      "Record wall-clock ms in the loss CSV (breaks byte reproducibility)");
  train_cmd->add_option("--resume", train_args.resume, "Resume from a checkpoint");
  train_cmd->add_option("--threads", train_args.threads, "Worker cap (training is sequential)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out split");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--idx", eval_args.idx, "IDX image file (or RESTORE_DATA_DIR)");
  eval_cmd->add_option("--seed", eval_args.seed, "Held-out corruption seed");
  eval_cmd->add_option("--n", eval_args.n, "Images to evaluate (0 = all held out)");
  eval_cmd->add_option("--out", eval_args.out, "Report CSV path");
  eval_cmd->add_option("--threads", eval_args.threads, "Worker cap");

  CompareArgs compare_args;
  auto* compare_cmd =
      app.add_subcommand("compare", "Compare two checkpoints and export a restoration grid");
  compare_cmd->add_option("--ckpt-a", compare_args.ckpt_a, "First checkpoint")->required();
  compare_cmd->add_option("--ckpt-b", compare_args.ckpt_b, "Second checkpoint")->required();
  compare_cmd->add_option("--idx", compare_args.idx, "IDX image file (or RESTORE_DATA_DIR)");
  compare_cmd->add_option("--seed", compare_args.seed, "Held-out corruption seed");
  compare_cmd->add_option("--n", compare_args.n, "Images to evaluate");
  compare_cmd->add_option("--grid-n", compare_args.grid_n, "Rows in the exported grid");
  compare_cmd->add_option("--out", compare_args.out, "Output directory");
  compare_cmd->add_option("--threads", compare_args.threads, "Worker cap");

  GradcheckArgs gradcheck_args;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Central-difference audit of every differentiable op");
  gradcheck_cmd->add_option("scope", gradcheck_args.scope,
                            "all | dense | conv2d | maxpool2d | conv2d-transpose | activations "
                            "| dropout | loss | lstm-cell | lstm-stack");
  gradcheck_cmd->add_option("--seed", gradcheck_args.seed, "Probe seed");
  gradcheck_cmd->add_option("--eq13", gradcheck_args.eq13, "standard or paper-exact")
      ->check(CLI::IsMember({"standard", "paper-exact"}));

  try {
    app.parse(argc, argv);
    if (*corrupt_cmd) return cmd_corrupt(corrupt_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*compare_cmd) return cmd_compare(compare_args);
    if (*gradcheck_cmd) return cmd_gradcheck(gradcheck_args);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const restore::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const restore::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const restore::Error& e) {  // data, format and shape problems
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "restore/data.hh"
#include "restore/model.hh"
#include "restore/training.hh"

namespace restore {

// ---------------------------------------------------------------------------
// Region-wise evaluation
// ---------------------------------------------------------------------------

/// Test-set metrics split at row 14, matching the corruption boundary:
/// rmse_upper isolates denoising skill, rmse_lower isolates inpainting.
struct EvalReport {
  std::string model_tag;
  std::size_t n_images = 0;
  std::uint64_t corruption_seed = 0;
  double rmse_full = 0.0;
  double rmse_upper = 0.0;  // rows 0..13
  double rmse_lower = 0.0;  // rows 14..27
  double q1 = 0.0, median = 0.0, q3 = 0.0;  // per-image full-RMSE quartiles
  double mean_gradient_mag = 0.0;  // smoothness diagnostic, no threshold attached
};

/// Maps a corrupted batch [B,1,28,28] to a restored batch of the same shape.
template <typename S>
using BatchRestorer = std::function<Tensor<S>(const Tensor<S>&)>;

template <typename S>
BatchRestorer<S> restorer(CnnLstmModel<S>& model) {
  return [&model](const Tensor<S>& batch) { return forward(model, batch); };
}

template <typename S>
BatchRestorer<S> restorer(CnnCnnBaseline<S>& model) {
  return [&model](const Tensor<S>& batch) { return baseline_forward(model, batch); };
}

/// Returns the corrupted input unchanged; the floor every trained model has
/// to beat.
template <typename S>
BatchRestorer<S> identity_restorer() {
  return [](const Tensor<S>& batch) { return batch; };
}

namespace detail {

inline double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * double(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

template <typename S>
double image_gradient_mag(const S* img, std::size_t h, std::size_t w) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (c + 1 < w) {
        acc += std::abs(double(img[r * w + c + 1]) - double(img[r * w + c]));
        ++count;
      }
      if (r + 1 < h) {
        acc += std::abs(double(img[(r + 1) * w + c]) - double(img[r * w + c]));
        ++count;
      }
    }
  return count ? acc / double(count) : 0.0;
}

}  // namespace detail

/// Evaluates a restorer on clean test images. Corruption is regenerated from
/// the given seed in index order, so two models evaluated with the same seed
/// see byte-identical inputs. Deterministic regardless of thread count: batch
/// composition is fixed by chunking and reduction runs in index order.
template <typename S>
EvalReport evaluate(const BatchRestorer<S>& restore_fn,
                    const std::vector<Tensor<S>>& clean_images, const CorruptionSpec& spec,
                    std::string model_tag, std::size_t batch_size = 64,
                    std::size_t threads = 1) {
  if (clean_images.empty()) throw DataError("evaluate: empty test set");
  const std::size_t n = clean_images.size();
  const std::size_t h = MnistSet::rows, w = MnistSet::cols;

  // corrupt sequentially under one engine so the seed alone pins the corpus
  Rng rng(spec.seed);
  std::vector<Tensor<S>> corrupted;
  corrupted.reserve(n);
  for (const Tensor<S>& img : clean_images) corrupted.push_back(corrupt(img, spec, rng));

  struct PerImage {
    double upper = 0.0, lower = 0.0, grad = 0.0;
  };
  std::vector<PerImage> sums(n);

  const std::size_t n_chunks = (n + batch_size - 1) / batch_size;
  auto process_chunk = [&](std::size_t chunk) {
    const std::size_t begin = chunk * batch_size;
    const std::size_t count = std::min(batch_size, n - begin);
    Tensor<S> batch({count, 1, h, w});
    for (std::size_t i = 0; i < count; ++i)
      std::copy(corrupted[begin + i].data.begin(), corrupted[begin + i].data.end(),
                batch.ptr() + i * h * w);
    Tensor<S> out = restore_fn(batch);
    if (out.shape != batch.shape)
      throw ShapeError("restorer returned " + shape_str(out.shape) + " for input " +
                       shape_str(batch.shape));
    for (std::size_t i = 0; i < count; ++i) {
      const S* got = out.ptr() + i * h * w;
      const S* want = clean_images[begin + i].ptr();
      PerImage& s = sums[begin + i];
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const double d = double(got[r * w + c]) - double(want[r * w + c]);
          (r < 14 ? s.upper : s.lower) += d * d;
        }
      s.grad = detail::image_gradient_mag(got, h, w);
    }
  };

  if (threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) process_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t t = 0; t < std::min(threads, n_chunks); ++t)
      pool.emplace_back([&] {
        for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
          process_chunk(c);
      });
    for (auto& t : pool) t.join();
  }

  EvalReport rep;
  rep.model_tag = std::move(model_tag);
  rep.n_images = n;
  rep.corruption_seed = spec.seed;
  double upper = 0.0, lower = 0.0, grad = 0.0;
  std::vector<double> per_image(n);
  for (std::size_t i = 0; i < n; ++i) {
    upper += sums[i].upper;
    lower += sums[i].lower;
    grad += sums[i].grad;
    per_image[i] = std::sqrt((sums[i].upper + sums[i].lower) / double(h * w));
  }
  const double half = double(n) * 14.0 * double(w);
  rep.rmse_upper = std::sqrt(upper / half);
  rep.rmse_lower = std::sqrt(lower / half);
  rep.rmse_full = std::sqrt((upper + lower) / (2.0 * half));
  rep.mean_gradient_mag = grad / double(n);
  std::sort(per_image.begin(), per_image.end());
  rep.q1 = detail::quantile(per_image, 0.25);
  rep.median = detail::quantile(per_image, 0.5);
  rep.q3 = detail::quantile(per_image, 0.75);
  return rep;
}

inline std::string eval_report_csv_header() {
  return "model,n_images,seed,rmse_full,rmse_upper,rmse_lower,q1,median,q3,mean_grad\n";
}

inline std::string eval_report_csv_row(const EvalReport& r) {
  char line[320];
  std::snprintf(line, sizeof line, "%s,%zu,%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                r.model_tag.c_str(), r.n_images, static_cast<unsigned long long>(r.corruption_seed),
                r.rmse_full, r.rmse_upper, r.rmse_lower, r.q1, r.median, r.q3,
                r.mean_gradient_mag);
  return line;
}

inline std::string eval_report_table(const std::vector<EvalReport>& reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %8s %12s %12s %12s %10s\n", "model", "images",
                "rmse_full", "rmse_upper", "rmse_lower", "median");
  out += line;
  for (const EvalReport& r : reports) {
    std::snprintf(line, sizeof line, "%-12s %8zu %12.6f %12.6f %12.6f %10.6f\n",
                  r.model_tag.c_str(), r.n_images, r.rmse_full, r.rmse_upper, r.rmse_lower,
                  r.median);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model comparison
// ---------------------------------------------------------------------------

struct Comparison {
  EvalReport a, b;

  double delta_full() const { return a.rmse_full - b.rmse_full; }
  double delta_upper() const { return a.rmse_upper - b.rmse_upper; }
  double delta_lower() const { return a.rmse_lower - b.rmse_lower; }

  std::string winner(double da) const { return da < 0 ? a.model_tag : (da > 0 ? b.model_tag : "tie"); }

  std::string text_table() const {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %12s %12s %12s\n", "metric", a.model_tag.c_str(),
                  b.model_tag.c_str(), "winner");
    out += line;
    auto row = [&](const char* name, double va, double vb) {
      const double d = va - vb;
      std::snprintf(line, sizeof line, "%-12s %12.6f %12.6f %12s\n", name, va, vb,
                    d < 0 ? a.model_tag.c_str() : (d > 0 ? b.model_tag.c_str() : "tie"));
      out += line;
    };
    row("rmse_full", a.rmse_full, b.rmse_full);
    row("rmse_upper", a.rmse_upper, b.rmse_upper);
    row("rmse_lower", a.rmse_lower, b.rmse_lower);
    return out;
  }
};

/// Guards that both reports describe the same corpus before comparing.
inline Comparison compare(const EvalReport& a, const EvalReport& b) {
  if (a.n_images != b.n_images || a.corruption_seed != b.corruption_seed)
    throw DataError("compare: reports cover different corpora (images " +
                    std::to_string(a.n_images) + " vs " + std::to_string(b.n_images) +
                    ", seeds " + std::to_string(a.corruption_seed) + " vs " +
                    std::to_string(b.corruption_seed) + ")");
  return Comparison{a, b};
}

// ---------------------------------------------------------------------------
// Image grid export
// ---------------------------------------------------------------------------

/// Four-column grid: input | model A | model B | original, with 2-pixel white
/// separators. n samples stack vertically with the same separators, so the
/// grid is (4*28 + 3*2) wide and (n*28 + (n-1)*2) tall.
template <typename S>
void export_grid(const std::vector<Tensor<S>>& inputs, const std::vector<Tensor<S>>& outputs_a,
                 const std::vector<Tensor<S>>& outputs_b,
                 const std::vector<Tensor<S>>& originals, const std::string& path) {
  const std::size_t n = inputs.size();
  if (n == 0 || outputs_a.size() != n || outputs_b.size() != n || originals.size() != n)
    throw UsageError("export_grid: column counts differ");
  if (n > 64) throw UsageError("export_grid: more than 64 rows");
  constexpr std::size_t cell = 28, sep = 2;
  const std::size_t width = 4 * cell + 3 * sep;
  const std::size_t height = n * cell + (n - 1) * sep;
  Tensor<S> grid = Tensor<S>::full({height, width}, S(1));  // separators stay white
  const std::vector<Tensor<S>>* columns[4] = {&inputs, &outputs_a, &outputs_b, &originals};
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t col = 0; col < 4; ++col) {
      const Tensor<S>& img = (*columns[col])[row];
      if (img.shape != Shape{cell, cell})
        throw ShapeError("export_grid: image " + std::to_string(row) + " in column " +
                         std::to_string(col) + " has shape " + shape_str(img.shape));
      const std::size_t y0 = row * (cell + sep);
      const std::size_t x0 = col * (cell + sep);
      for (std::size_t r = 0; r < cell; ++r)
        for (std::size_t c = 0; c < cell; ++c) grid(y0 + r, x0 + c) = img(r, c);
    }
  }
  write_pgm(path, grid);
}

// ---------------------------------------------------------------------------
// Loss-curve trend
// ---------------------------------------------------------------------------

/// Least-squares fit of total loss against ln(iteration): y = a ln(x) + b.
struct TrendFit {
  double a = 0.0;
  double b = 0.0;
  double residual_rms = 0.0;
};

inline TrendFit fit_log_trend(const std::vector<LossRecord>& log) {
  if (log.size() < 2) throw UsageError("fit_log_trend needs at least 2 points");
  const double n = double(log.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const LossRecord& r : log) {
    if (r.iteration < 1) throw UsageError("fit_log_trend: iterations must be >= 1");
    const double x = std::log(double(r.iteration));
    sx += x;
    sy += r.total;
    sxx += x * x;
    sxy += x * r.total;
  }
  TrendFit fit;
  const double denom = sxx - sx * sx / n;
  fit.a = denom != 0.0 ? (sxy - sx * sy / n) / denom : 0.0;
  fit.b = (sy - fit.a * sx) / n;
  double res = 0;
  for (const LossRecord& r : log) {
    const double e = r.total - (fit.a * std::log(double(r.iteration)) + fit.b);
    res += e * e;
  }
  fit.residual_rms = std::sqrt(res / n);
  return fit;
}

}  // namespace restore

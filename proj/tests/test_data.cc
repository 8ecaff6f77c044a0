#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>

#include "restore/data.hh"
#include "restore/digits.hh"

using namespace restore;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string write_corpus_idx(std::size_t n, std::uint64_t seed, const char* name) {
  std::string path = temp_path(name);
  write_idx(path, make_digit_corpus(n, seed), n);
  return path;
}

}  // namespace

TEST_CASE("load_idx parses a well-formed image file") {
  std::string path = write_corpus_idx(40, 1, "idx_ok.idx");
  MnistSet set = load_idx(path);
  CHECK(set.count == 40);
  CHECK(set.images.size() == 40 * 784);
  CHECK(set.checksum != 0);

  // same content gzip-compressed is accepted by magic sniffing
  std::string gz = path + ".gz";
  REQUIRE(std::system(("gzip -kf " + path).c_str()) == 0);
  MnistSet gz_set = load_idx(gz);
  CHECK(gz_set.count == set.count);
  CHECK(gz_set.images == set.images);
  CHECK(gz_set.checksum == set.checksum);
}

TEST_CASE("load_idx rejects a label-file magic") {
  std::string path = temp_path("idx_label.idx");
  std::vector<std::uint8_t> header = {0, 0, 8, 1, 0, 0, 0, 4, 1, 2, 3, 4};
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(header.data()), header.size());
  CHECK_THROWS_WITH(load_idx(path), Catch::Matchers::ContainsSubstring("expected image magic"));
}

TEST_CASE("load_idx reports truncation with expected and actual lengths") {
  std::string full = write_corpus_idx(10, 2, "idx_trunc.idx");
  auto bytes = detail::read_file(full);
  bytes.resize(bytes.size() - 100);
  std::string path = temp_path("idx_trunc_cut.idx");
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  CHECK_THROWS_WITH(load_idx(path),
                    Catch::Matchers::ContainsSubstring("7856") &&
                        Catch::Matchers::ContainsSubstring("7756"));
}

TEST_CASE("load_idx rejects wrong dimensions") {
  std::string path = temp_path("idx_dims.idx");
  std::vector<std::uint8_t> bytes(16 + 32 * 32);
  detail::write_be32(0x00000803, bytes.data());
  detail::write_be32(1, bytes.data() + 4);
  detail::write_be32(32, bytes.data() + 8);
  detail::write_be32(32, bytes.data() + 12);
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  CHECK_THROWS_WITH(load_idx(path), Catch::Matchers::ContainsSubstring("dimension mismatch"));
}

TEST_CASE("normalize maps bytes to [0,1] and round-trips exactly") {
  std::vector<std::uint8_t> bytes(784);
  for (std::size_t i = 0; i < 784; ++i) bytes[i] = static_cast<std::uint8_t>(i % 256);
  Tensor<double> img = normalize<double>(bytes);
  CHECK(img.data[0] == 0.0);
  CHECK(img.data[255] == 1.0);
  CHECK(img.data[128] == Catch::Approx(128.0 / 255.0).epsilon(1e-12));
  for (std::size_t i = 0; i < 784; ++i)
    CHECK(std::lround(img.data[i] * 255.0) == long(bytes[i]));
}

TEST_CASE("corruption blanks rows 14..27 and leaves the clean image alone") {
  Rng rng(5);
  Tensor<double> clean = Tensor<double>::full({28, 28}, 0.5);
  CorruptionSpec spec;
  spec.noise_density = 0.0;
  Tensor<double> out = corrupt(clean, spec, rng);
  for (std::size_t r = 0; r < 28; ++r)
    for (std::size_t c = 0; c < 28; ++c)
      CHECK(out(r, c) == (r >= 14 ? 0.0 : 0.5));
  for (double v : clean.data) CHECK(v == 0.5);  // untouched
}

TEST_CASE("full-density corruption leaves only extreme values") {
  Rng rng(6);
  Tensor<double> clean = Tensor<double>::full({28, 28}, 0.5);
  CorruptionSpec spec;
  spec.noise_density = 1.0;
  Tensor<double> out = corrupt(clean, spec, rng);
  for (double v : out.data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("corruption statistics at density 0.2 (property)") {
  // mid-gray input makes replacements observable in the upper half
  Rng rng(7);
  CorruptionSpec spec;
  spec.noise_density = 0.2;
  std::size_t replaced = 0, salt = 0, upper_pixels = 0;
  for (int i = 0; i < 30; ++i) {
    Tensor<double> clean = Tensor<double>::full({28, 28}, 0.5);
    Tensor<double> out = corrupt(clean, spec, rng);
    for (std::size_t r = 0; r < 14; ++r)
      for (std::size_t c = 0; c < 28; ++c) {
        ++upper_pixels;
        if (out(r, c) == 1.0) {
          ++replaced;
          ++salt;
        } else if (out(r, c) == 0.0) {
          ++replaced;
        }
      }
  }
  REQUIRE(upper_pixels >= 10000);
  const double frac = double(replaced) / double(upper_pixels);
  CHECK(frac >= 0.18);
  CHECK(frac <= 0.22);
  const double salt_ratio = double(salt) / double(replaced);
  CHECK(salt_ratio >= 0.45);
  CHECK(salt_ratio <= 0.55);
}

TEST_CASE("blanking is idempotent, noisy corruption is not") {
  Rng rng(8);
  Tensor<double> clean = Tensor<double>::full({28, 28}, 0.7);
  CorruptionSpec blank_only;
  blank_only.noise_density = 0.0;
  Tensor<double> once = corrupt(clean, blank_only, rng);
  Tensor<double> twice = corrupt(once, blank_only, rng);
  CHECK(once.data == twice.data);

  CorruptionSpec noisy;
  noisy.noise_density = 0.3;
  Rng ra(9), rb(10);
  Tensor<double> a = corrupt(clean, noisy, ra);
  Tensor<double> b = corrupt(a, noisy, rb);
  CHECK(a.data != b.data);
}

TEST_CASE("split honors the 75/25 fractions") {
  MnistSet set;
  set.count = 60000;
  set.images.resize(60000 * 784);
  Split s = split(set, SplitSpec{});
  CHECK(s.train.size() == 45000);
  CHECK(s.test.size() == 15000);

  MnistSet tiny;
  tiny.count = 4;
  tiny.images.resize(4 * 784);
  Split st = split(tiny, SplitSpec{});
  CHECK(st.train.size() == 3);
  CHECK(st.test.size() == 1);

  // disjoint and exhaustive
  std::vector<bool> seen(4, false);
  for (auto i : st.train) seen[i] = true;
  for (auto i : st.test) {
    CHECK(!seen[i]);
    seen[i] = true;
  }
  for (bool b : seen) CHECK(b);
}

TEST_CASE("split is deterministic under its seed") {
  MnistSet set;
  set.count = 1000;
  set.images.resize(1000 * 784);
  SplitSpec spec;
  spec.seed = 1234;
  Split a = split(set, spec);
  Split b = split(set, spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  spec.seed = 5678;
  Split c = split(set, spec);
  CHECK(a.train != c.train);
}

TEST_CASE("batch streams are deterministic and re-corrupt on every draw") {
  std::string path = write_corpus_idx(64, 3, "idx_stream.idx");
  MnistSet set = load_idx(path);
  std::vector<std::uint32_t> idx(set.count);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);

  CorruptionSpec spec;
  BatchStream<float> a(set, idx, 16, spec, 99);
  BatchStream<float> b(set, idx, 16, spec, 99);
  CHECK(a.batches_per_epoch() == 4);
  for (int step = 0; step < 9; ++step) {  // crosses an epoch boundary
    auto ba = a.next();
    auto bb = b.next();
    REQUIRE(ba.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(ba[i].corrupted.data == bb[i].corrupted.data);
      CHECK(ba[i].clean.data == bb[i].clean.data);
    }
  }

  SECTION("blanked region never leaks original signal") {
    BatchStream<float> s(set, idx, 8, spec, 5);
    auto batch = s.next();
    for (const auto& pair : batch)
      for (std::size_t r = 14; r < 28; ++r)
        for (std::size_t c = 0; c < 28; ++c) {
          float v = pair.corrupted(r, c);
          CHECK((v == 0.0f || v == 1.0f));  // blank or noise only
        }
  }

  SECTION("singleton batches preserve pair alignment") {
    BatchStream<double> s(set, idx, 1, spec, 6);
    auto batch = s.next();
    REQUIRE(batch.size() == 1);
    // upper half of the corrupted image matches the clean one wherever noise
    // did not strike
    std::size_t agree = 0, total = 0;
    for (std::size_t r = 0; r < 14; ++r)
      for (std::size_t c = 0; c < 28; ++c) {
        ++total;
        agree += batch[0].corrupted(r, c) == batch[0].clean(r, c);
      }
    CHECK(double(agree) / double(total) > 0.5);
  }

  SECTION("stream state round-trips through serialization") {
    BatchStream<float> s(set, idx, 16, spec, 7);
    s.next();
    s.next();
    auto state = s.state();
    BatchStream<float> resumed(set, idx, 16, spec, 1);  // wrong seed on purpose
    resumed.set_state(state);
    auto want = s.next();
    auto got = resumed.next();
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(want[i].corrupted.data == got[i].corrupted.data);
  }
}

TEST_CASE("pgm round-trip recovers pixels within quantization error") {
  Rng rng(11);
  Tensor<double> img({28, 28});
  for (auto& v : img.data) v = uniform(rng);
  std::string path = temp_path("img.pgm");
  write_pgm(path, img);
  Tensor<double> back = read_pgm<double>(path);
  REQUIRE(back.shape == img.shape);
  for (std::size_t i = 0; i < img.numel(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("digit corpus renders bright strokes on dark background") {
  auto bytes = make_digit_corpus(20, 42);
  REQUIRE(bytes.size() == 20 * 784);
  for (std::size_t i = 0; i < 20; ++i) {
    std::size_t bright = 0, dark = 0;
    for (std::size_t p = 0; p < 784; ++p) {
      if (bytes[i * 784 + p] > 128) ++bright;
      if (bytes[i * 784 + p] == 0) ++dark;
    }
    CHECK(bright > 20);   // visible glyph
    CHECK(dark > 300);    // mostly background
  }
  // deterministic under seed
  CHECK(make_digit_corpus(20, 42) == bytes);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "hnca/bandit.hpp"

using namespace hnca;
using namespace hnca::bandit;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hnca_bandit_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_raw(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

void push_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v >> 24));
  b.push_back(static_cast<unsigned char>(v >> 16));
  b.push_back(static_cast<unsigned char>(v >> 8));
  b.push_back(static_cast<unsigned char>(v));
}

}  // namespace

TEST_CASE("handcrafted idx pair loads with scaled pixels") {
  TempDir tmp;
  // two 3x3 images: bytes 0..8 and 255s
  std::vector<unsigned char> images;
  push_u32(images, 2051);
  push_u32(images, 2);
  push_u32(images, 3);
  push_u32(images, 3);
  for (int i = 0; i < 9; ++i) images.push_back(static_cast<unsigned char>(i));
  for (int i = 0; i < 9; ++i) images.push_back(255);
  std::vector<unsigned char> labels;
  push_u32(labels, 2049);
  push_u32(labels, 2);
  labels.push_back(4);
  labels.push_back(9);
  write_raw(tmp.file("img"), images);
  write_raw(tmp.file("lab"), labels);

  Dataset d = load_idx(tmp.file("img"), tmp.file("lab"));
  CHECK(d.size() == 2);
  CHECK(d.dim() == 9);
  CHECK(d.contexts(0, 0) == 0.0);
  CHECK(d.contexts(0, 5) == doctest::Approx(5.0 / 255.0).epsilon(1e-15));
  CHECK(d.contexts(1, 8) == 1.0);
  CHECK(d.labels[0] == 4);
  CHECK(d.labels[1] == 9);  // label byte 9 -> class 9
  CHECK(d.num_classes == 10);
}

TEST_CASE("idx error taxonomy is distinct") {
  TempDir tmp;
  std::vector<unsigned char> images;
  push_u32(images, 2052);  // wrong magic
  push_u32(images, 1);
  push_u32(images, 1);
  push_u32(images, 1);
  images.push_back(7);
  std::vector<unsigned char> labels;
  push_u32(labels, 2049);
  push_u32(labels, 1);
  labels.push_back(0);
  write_raw(tmp.file("img"), images);
  write_raw(tmp.file("lab"), labels);
  CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab")),
                  IdxBadMagicError);

  images[3] = 0x03;  // fix the magic (2051), then truncate the payload
  images.pop_back();
  write_raw(tmp.file("img"), images);
  CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab")),
                  IdxTruncatedError);

  images.push_back(7);
  write_raw(tmp.file("img"), images);
  std::vector<unsigned char> labels2;
  push_u32(labels2, 2049);
  push_u32(labels2, 2);  // claims two labels for one image
  labels2.push_back(0);
  labels2.push_back(1);
  write_raw(tmp.file("lab"), labels2);
  CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab")),
                  IdxCountMismatchError);
}

TEST_CASE("idx round trip is bit exact, plain and gzipped") {
  TempDir tmp;
  RngStream rng(40, 0);
  Dataset d = synthetic_dataset(SyntheticKind::LinearlySeparable, 64, 5, 3,
                                rng);
  for (const char* suffix : {"", ".gz"}) {
    const std::string img = tmp.file(std::string("rt-img") + suffix);
    const std::string lab = tmp.file(std::string("rt-lab") + suffix);
    write_idx(d, img, lab);
    Dataset back = load_idx(img, lab);
    CHECK(back.contexts.cwiseEqual(d.contexts).all());
    CHECK(back.labels == d.labels);
  }
}

TEST_CASE("bundled digits fixture loads through the gzip path") {
  const std::string dir = HNCA_TEST_DATA_DIR;
  Dataset d = load_idx(dir + "/digits-images-idx3-ubyte.gz",
                       dir + "/digits-labels-idx1-ubyte.gz");
  CHECK(d.size() == 1797);
  CHECK(d.dim() == 64);
  CHECK(d.num_classes == 10);
  CHECK(d.contexts.minCoeff() >= 0.0);
  CHECK(d.contexts.maxCoeff() <= 1.0);
}

TEST_CASE("reward is the indicator of a correct guess") {
  CHECK(reward(3, 3) == 1.0);
  CHECK(reward(3, 4) == 0.0);
  // uniform policy earns 1/K in expectation on any labels
  const int K = 5;
  std::vector<int> labels{0, 1, 2, 3, 4, 2, 2, 1};
  double total = 0.0;
  for (int label : labels) {
    for (int a = 0; a < K; ++a) total += reward(label, a) / K;
  }
  CHECK(total / labels.size() == doctest::Approx(1.0 / K).epsilon(1e-15));
}

TEST_CASE("xor bits labels are the parity of the first two binarized bits") {
  RngStream rng(41, 0);
  Dataset d = synthetic_dataset(SyntheticKind::XorBits, 256, 6, 2, rng);
  for (int i = 0; i < d.size(); ++i) {
    const int b0 = d.contexts(i, 0) >= 0.5 ? 1 : 0;
    const int b1 = d.contexts(i, 1) >= 0.5 ? 1 : 0;
    CHECK(d.labels[i] == (b0 ^ b1));
  }
  // an all-high context gets label 0
  bool saw_both_high = false;
  for (int i = 0; i < d.size(); ++i) {
    if (d.contexts(i, 0) >= 0.5 && d.contexts(i, 1) >= 0.5) {
      saw_both_high = true;
      CHECK(d.labels[i] == 0);
    }
  }
  CHECK(saw_both_high);

  RngStream rng2(41, 0);
  Dataset d2 = synthetic_dataset(SyntheticKind::XorBits, 256, 6, 2, rng2);
  CHECK(d2.contexts.cwiseEqual(d.contexts).all());
  CHECK(d2.labels == d.labels);

  RngStream rng3(41, 0);
  CHECK_THROWS_AS(synthetic_dataset(SyntheticKind::XorBits, 16, 1, 2, rng3),
                  SpecError);
}

TEST_CASE("linearly separable labels come from the generating map") {
  RngStream rng(42, 7);
  Dataset d = synthetic_dataset(SyntheticKind::LinearlySeparable, 128, 4, 3,
                                rng);
  // Replay the stream: the separator rows are drawn before any feature.
  RngStream replay(42, 7);
  Mat sep(3, 4);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) sep(r, c) = replay.uniform(-1.0, 1.0);
  }
  for (int i = 0; i < d.size(); ++i) {
    Vec scores = sep * d.contexts.row(i).transpose();
    int best = 0;
    scores.maxCoeff(&best);
    CHECK(d.labels[i] == best);  // the map classifies its own data perfectly
  }
}

TEST_CASE("epoch batches cover every index once with the final partial kept") {
  RngStream rng(43, 0);
  auto batches = epoch_batches(100, 16, rng);
  CHECK(batches.size() == 7);
  for (int b = 0; b < 6; ++b) CHECK(batches[b].size() == 16);
  CHECK(batches[6].size() == 4);

  std::set<int> seen;
  for (const auto& batch : batches) seen.insert(batch.begin(), batch.end());
  CHECK(seen.size() == 100);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 99);

  RngStream a(44, 1), b(44, 1);
  CHECK(epoch_batches(33, 5, a) == epoch_batches(33, 5, b));

  RngStream rng2(43, 0);
  auto singles = epoch_batches(9, 1, rng2);
  CHECK(singles.size() == 9);
  for (const auto& batch : singles) CHECK(batch.size() == 1);
}

TEST_CASE("dataset validation and subset") {
  RngStream rng(45, 0);
  Dataset d = synthetic_dataset(SyntheticKind::LinearlySeparable, 32, 3, 2,
                                rng);
  Dataset s = subset(d, 10);
  CHECK(s.size() == 10);
  CHECK(s.contexts.row(9).cwiseEqual(d.contexts.row(9)).all());
  CHECK_THROWS_AS(subset(d, 0), SpecError);
  CHECK_THROWS_AS(subset(d, 33), SpecError);

  Dataset bad = d;
  bad.labels[0] = 7;
  CHECK_THROWS_AS(bad.validate(), SpecError);
}

#include "hnca/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <zlib.h>

namespace hnca::bandit {

namespace {

constexpr std::uint32_t kImageMagic = 2051;  // 0x00000803
constexpr std::uint32_t kLabelMagic = 2049;  // 0x00000801

class GzReader {
 public:
  explicit GzReader(const std::string& path)
      : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) {
      throw IdxError("cannot open " + path);
    }
  }
  ~GzReader() {
    if (file_ != nullptr) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read_exact(unsigned char* dst, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      const unsigned chunk = static_cast<unsigned>(
          std::min<std::size_t>(n - got, 1u << 20));
      const int r = gzread(file_, dst + got, chunk);
      if (r <= 0) {
        throw IdxTruncatedError("truncated payload in " + path_ + " (read " +
                                std::to_string(got) + " of " +
                                std::to_string(n) + " bytes)");
      }
      got += static_cast<std::size_t>(r);
    }
  }

  std::uint32_t read_u32_be() {
    unsigned char b[4];
    read_exact(b, 4);
    return (static_cast<std::uint32_t>(b[0]) << 24) |
           (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) |
           static_cast<std::uint32_t>(b[3]);
  }

 private:
  std::string path_;
  gzFile file_;
};

bool has_gz_suffix(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void write_bytes(const std::string& path,
                 const std::vector<unsigned char>& bytes) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (f == nullptr) throw IdxError("cannot open " + path + " for writing");
    const int written =
        gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (written != static_cast<int>(bytes.size())) {
      throw IdxError("short write to " + path);
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IdxError("short write to " + path);
}

void push_u32_be(std::vector<unsigned char>& bytes, std::uint32_t v) {
  bytes.push_back(static_cast<unsigned char>(v >> 24));
  bytes.push_back(static_cast<unsigned char>(v >> 16));
  bytes.push_back(static_cast<unsigned char>(v >> 8));
  bytes.push_back(static_cast<unsigned char>(v));
}

// Uniform byte on the 1/255 feature grid.
double grid_feature(RngStream& rng) {
  const int byte = std::min(255, static_cast<int>(rng.uniform() * 256.0));
  return byte / 255.0;
}

}  // namespace

void Dataset::validate() const {
  if (size() < 1) throw SpecError("dataset is empty");
  if (static_cast<int>(labels.size()) != size()) {
    throw SpecError("label count does not match context count");
  }
  if (num_classes < 2) throw SpecError("dataset needs >= 2 classes");
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw SpecError("label out of range");
    }
  }
  if (!contexts.allFinite()) throw SpecError("dataset contains NaN features");
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  GzReader images(images_path);
  const std::uint32_t image_magic = images.read_u32_be();
  if (image_magic != kImageMagic) {
    throw IdxBadMagicError("bad image magic in " + images_path + ": " +
                           std::to_string(image_magic));
  }
  const std::uint32_t n_images = images.read_u32_be();
  const std::uint32_t rows = images.read_u32_be();
  const std::uint32_t cols = images.read_u32_be();
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(n_images) * dim);
  images.read_exact(pixels.data(), pixels.size());

  GzReader labels(labels_path);
  const std::uint32_t label_magic = labels.read_u32_be();
  if (label_magic != kLabelMagic) {
    throw IdxBadMagicError("bad label magic in " + labels_path + ": " +
                           std::to_string(label_magic));
  }
  const std::uint32_t n_labels = labels.read_u32_be();
  if (n_labels != n_images) {
    throw IdxCountMismatchError("image count " + std::to_string(n_images) +
                                " != label count " + std::to_string(n_labels));
  }
  std::vector<unsigned char> label_bytes(n_labels);
  labels.read_exact(label_bytes.data(), label_bytes.size());

  Dataset d;
  d.name = images_path;
  d.contexts.resize(n_images, dim);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      d.contexts(i, j) = pixels[i * dim + j] / 255.0;
    }
  }
  d.labels.assign(label_bytes.begin(), label_bytes.end());
  int max_label = 0;
  for (int label : d.labels) max_label = std::max(max_label, label);
  d.num_classes = std::max(2, max_label + 1);
  d.validate();
  return d;
}

void write_idx(const Dataset& dataset, const std::string& images_path,
               const std::string& labels_path) {
  const int n = dataset.size();
  const int dim = dataset.dim();
  std::vector<unsigned char> images;
  images.reserve(16 + static_cast<std::size_t>(n) * dim);
  push_u32_be(images, kImageMagic);
  push_u32_be(images, static_cast<std::uint32_t>(n));
  push_u32_be(images, 1);
  push_u32_be(images, static_cast<std::uint32_t>(dim));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) {
      images.push_back(static_cast<unsigned char>(
          std::lround(dataset.contexts(i, j) * 255.0)));
    }
  }
  write_bytes(images_path, images);

  std::vector<unsigned char> labels;
  labels.reserve(8 + n);
  push_u32_be(labels, kLabelMagic);
  push_u32_be(labels, static_cast<std::uint32_t>(n));
  for (int label : dataset.labels) {
    labels.push_back(static_cast<unsigned char>(label));
  }
  write_bytes(labels_path, labels);
}

Dataset subset(const Dataset& dataset, int n) {
  if (n < 1 || n > dataset.size()) {
    throw SpecError("subset size out of range");
  }
  Dataset out;
  out.contexts = dataset.contexts.topRows(n);
  out.labels.assign(dataset.labels.begin(), dataset.labels.begin() + n);
  out.num_classes = dataset.num_classes;
  out.name = dataset.name;
  return out;
}

Dataset synthetic_dataset(SyntheticKind kind, int n, int d, int num_classes,
                          RngStream& rng) {
  if (n < 1 || d < 1 || num_classes < 2) {
    throw SpecError("bad synthetic dataset dimensions");
  }
  if (kind == SyntheticKind::XorBits && d < 2) {
    throw SpecError("xor_bits requires d >= 2");
  }
  Dataset out;
  out.num_classes = num_classes;
  out.contexts.resize(n, d);
  out.labels.resize(n);

  Mat separator;
  if (kind == SyntheticKind::LinearlySeparable) {
    separator.resize(num_classes, d);
    for (int r = 0; r < num_classes; ++r) {
      for (int c = 0; c < d; ++c) separator(r, c) = rng.uniform(-1.0, 1.0);
    }
  }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.contexts(i, j) = grid_feature(rng);
    if (kind == SyntheticKind::XorBits) {
      const int b0 = out.contexts(i, 0) >= 0.5 ? 1 : 0;
      const int b1 = out.contexts(i, 1) >= 0.5 ? 1 : 0;
      out.labels[i] = b0 ^ b1;
      out.name = "xor_bits";
    } else {
      Vec scores = separator * out.contexts.row(i).transpose();
      int best = 0;
      scores.maxCoeff(&best);
      out.labels[i] = best;
      out.name = "linearly_separable";
    }
  }
  out.validate();
  return out;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size,
                                            RngStream& rng) {
  if (batch_size < 1) throw SpecError("batch_size must be >= 1");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  // Fisher-Yates with the provided stream.
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(order[i], order[std::min(j, i)]);
  }
  std::vector<std::vector<int>> batches;
  for (int at = 0; at < n; at += batch_size) {
    const int end = std::min(n, at + batch_size);
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  return batches;
}

}  // namespace hnca::bandit

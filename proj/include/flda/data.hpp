#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flda/rng.hpp"

namespace flda {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SampleView {
  std::span<const float> features;
  int label;
};

// Labeled classification dataset. Features are stored flat, row-major,
// normalized to [0, 1]; labels are in [0, num_classes).
struct Dataset {
  std::vector<float> features;
  std::vector<int> labels;
  int dim = 0;
  int num_classes = 0;

  size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  SampleView sample(size_t i) const {
    return {std::span<const float>(features.data() + i * static_cast<size_t>(dim), dim),
            labels[i]};
  }

  void push_back(std::span<const float> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }
};

inline std::vector<int> label_histogram(const Dataset& d) {
  std::vector<int> h(d.num_classes, 0);
  for (int y : d.labels) h[y]++;
  return h;
}

namespace detail {

inline uint32_t read_be_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError(std::string("unexpected end of file reading ") + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace detail

inline constexpr uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelsMagic = 0x00000801;

// Reads an IDX image/label file pair (big-endian header, raw u8 payload).
// Pixels are scaled to [0, 1].
inline Dataset load_idx(const std::string& image_path, const std::string& label_path) {
  std::ifstream img(image_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + image_path);
  std::ifstream lab(label_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + label_path);

  uint32_t img_magic = detail::read_be_u32(img, "image magic");
  if (img_magic != kIdxImagesMagic)
    throw FormatError(image_path + ": bad image magic 0x" + std::to_string(img_magic));
  uint32_t lab_magic = detail::read_be_u32(lab, "label magic");
  if (lab_magic != kIdxLabelsMagic)
    throw FormatError(label_path + ": bad label magic 0x" + std::to_string(lab_magic));

  uint32_t n_img = detail::read_be_u32(img, "image count");
  uint32_t rows = detail::read_be_u32(img, "image rows");
  uint32_t cols = detail::read_be_u32(img, "image cols");
  uint32_t n_lab = detail::read_be_u32(lab, "label count");
  if (n_img != n_lab)
    throw FormatError("image/label counts differ: " + std::to_string(n_img) + " vs " +
                      std::to_string(n_lab));

  const size_t dim = size_t(rows) * size_t(cols);
  Dataset d;
  d.dim = static_cast<int>(dim);
  d.features.resize(size_t(n_img) * dim);
  d.labels.resize(n_img);

  std::vector<unsigned char> buf(dim);
  for (uint32_t i = 0; i < n_img; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!img) throw IoError(image_path + ": truncated pixel data at sample " + std::to_string(i));
    for (size_t j = 0; j < dim; ++j)
      d.features[i * dim + j] = static_cast<float>(buf[j]) / 255.0f;
  }
  std::vector<unsigned char> labels_raw(n_lab);
  lab.read(reinterpret_cast<char*>(labels_raw.data()), n_lab);
  if (!lab) throw IoError(label_path + ": truncated label data");

  int max_label = 0;
  for (uint32_t i = 0; i < n_lab; ++i) {
    d.labels[i] = labels_raw[i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = max_label + 1;
  return d;
}

// Gaussian class clusters with distinct means, features clipped to [0, 1].
// `variant` selects a different noise realization over the same means, so a
// matched test set can be drawn from the same class distribution. `sigma`
// controls class overlap.
inline Dataset synth_dataset(uint64_t seed, int C, int dim, int per_class, int variant = 0,
                             double sigma = 0.13) {
  if (C < 2 || dim < 1 || per_class < 1)
    throw std::invalid_argument("synth_dataset: need C >= 2, dim >= 1, per_class >= 1");

  Rng means_rng = make_stream(seed, Stream::SynthMeans);
  std::vector<float> means(size_t(C) * dim);
  for (auto& m : means) m = static_cast<float>(0.15 + 0.7 * means_rng.uniform());

  Rng noise = make_stream(seed, Stream::SynthNoise, static_cast<uint64_t>(variant));

  Dataset d;
  d.dim = dim;
  d.num_classes = C;
  d.features.resize(size_t(C) * per_class * dim);
  d.labels.resize(size_t(C) * per_class);
  size_t idx = 0;
  for (int c = 0; c < C; ++c) {
    for (int s = 0; s < per_class; ++s, ++idx) {
      d.labels[idx] = c;
      for (int j = 0; j < dim; ++j) {
        double v = means[size_t(c) * dim + j] + sigma * noise.gaussian();
        d.features[idx * dim + j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return d;
}

// Per-user label-skew partition: each user gets `minority_labels_per_user`
// randomly chosen labels at `minority_count` samples and every other label at
// `majority_count` samples.
struct PartitionSpec {
  int num_users = 0;
  int minority_labels_per_user = 0;
  int minority_count = 0;
  int majority_count = 0;
  uint64_t seed = 0;
  bool replace_across_users = true;
};

inline std::vector<Dataset> partition_non_iid(const Dataset& d, const PartitionSpec& spec) {
  const int C = d.num_classes;
  if (spec.num_users < 1) throw std::invalid_argument("partition: num_users >= 1 required");
  if (spec.minority_labels_per_user < 0 || spec.minority_labels_per_user > C)
    throw std::invalid_argument("partition: minority_labels_per_user out of range");

  std::vector<std::vector<int>> by_label(C);
  for (size_t i = 0; i < d.size(); ++i) by_label[d.labels[i]].push_back(static_cast<int>(i));

  // remaining[c] tracks the unconsumed tail when cross-user replacement is off
  std::vector<std::vector<int>> remaining = by_label;

  Rng rng = make_stream(spec.seed, Stream::Partition);
  std::vector<Dataset> users;
  users.reserve(spec.num_users);

  for (int k = 0; k < spec.num_users; ++k) {
    // minority labels drawn uniformly without replacement, per user
    std::vector<int> labels(C);
    std::iota(labels.begin(), labels.end(), 0);
    for (int i = 0; i < spec.minority_labels_per_user; ++i) {
      int j = i + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(C - i)));
      std::swap(labels[i], labels[j]);
    }
    std::vector<bool> is_minority(C, false);
    for (int i = 0; i < spec.minority_labels_per_user; ++i) is_minority[labels[i]] = true;

    Dataset user;
    user.dim = d.dim;
    user.num_classes = C;
    for (int c = 0; c < C; ++c) {
      const int want = is_minority[c] ? spec.minority_count : spec.majority_count;
      auto& pool = spec.replace_across_users ? by_label[c] : remaining[c];
      if (static_cast<int>(pool.size()) < want)
        throw std::runtime_error("partition: class " + std::to_string(c) + " has " +
                                 std::to_string(pool.size()) + " samples, needs " +
                                 std::to_string(want));
      // partial Fisher-Yates: within-user draws are without replacement
      for (int i = 0; i < want; ++i) {
        int j = i + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(pool.size() - i)));
        std::swap(pool[i], pool[j]);
        user.push_back(d.sample(pool[i]).features, c);
      }
      if (!spec.replace_across_users) pool.erase(pool.begin(), pool.begin() + want);
    }
    users.push_back(std::move(user));
  }
  return users;
}

}  // namespace flda

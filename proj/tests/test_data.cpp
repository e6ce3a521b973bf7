#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "flda/data.hpp"

using namespace flda;

namespace {

void write_be32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxPair {
  std::string images = testing::TempDir() + "idx_images.bin";
  std::string labels = testing::TempDir() + "idx_labels.bin";

  // n samples of rows x cols, pixel value = sample index, label = index % 3
  void write(uint32_t n, uint32_t rows, uint32_t cols, uint32_t img_magic = kIdxImagesMagic,
             uint32_t lab_magic = kIdxLabelsMagic) {
    std::ofstream img(images, std::ios::binary);
    write_be32(img, img_magic);
    write_be32(img, n);
    write_be32(img, rows);
    write_be32(img, cols);
    for (uint32_t i = 0; i < n; ++i)
      for (uint32_t j = 0; j < rows * cols; ++j) img.put(static_cast<char>(i));
    std::ofstream lab(labels, std::ios::binary);
    write_be32(lab, lab_magic);
    write_be32(lab, n);
    for (uint32_t i = 0; i < n; ++i) lab.put(static_cast<char>(i % 3));
  }
};

}  // namespace

TEST(LoadIdx, ReadsCountsAndScales) {
  IdxPair f;
  f.write(12, 4, 5);
  Dataset d = load_idx(f.images, f.labels);
  EXPECT_EQ(d.size(), 12u);
  EXPECT_EQ(d.dim, 20);
  EXPECT_EQ(d.num_classes, 3);
  EXPECT_FLOAT_EQ(d.sample(0).features[0], 0.0f);
  EXPECT_FLOAT_EQ(d.sample(10).features[3], 10.0f / 255.0f);
  EXPECT_EQ(d.sample(10).label, 1);
}

TEST(LoadIdx, LabelMagicPassedAsImagesIsFormatError) {
  IdxPair f;
  f.write(4, 2, 2, /*img_magic=*/kIdxLabelsMagic);
  EXPECT_THROW(load_idx(f.images, f.labels), FormatError);
}

TEST(LoadIdx, EmptyFileIsIoError) {
  std::string path = testing::TempDir() + "idx_empty.bin";
  std::ofstream(path, std::ios::binary).close();
  IdxPair f;
  f.write(4, 2, 2);
  EXPECT_THROW(load_idx(path, f.labels), IoError);
}

TEST(LoadIdx, TruncatedPixelsIsIoError) {
  IdxPair f;
  f.write(4, 2, 2);
  // rewrite the image file claiming 4 samples but carrying only 2
  {
    std::ofstream img(f.images, std::ios::binary);
    write_be32(img, kIdxImagesMagic);
    write_be32(img, 4);
    write_be32(img, 2);
    write_be32(img, 2);
    for (int i = 0; i < 8; ++i) img.put(0);
  }
  EXPECT_THROW(load_idx(f.images, f.labels), IoError);
}

TEST(Synth, CountsAndDeterminism) {
  Dataset a = synth_dataset(1, 2, 2, 10);
  EXPECT_EQ(a.size(), 20u);
  auto h = label_histogram(a);
  EXPECT_EQ(h[0], 10);
  EXPECT_EQ(h[1], 10);

  Dataset b = synth_dataset(1, 2, 2, 10);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);

  Dataset c = synth_dataset(2, 2, 2, 10);
  EXPECT_NE(a.features, c.features);
}

TEST(Synth, FeaturesBoundedAndVariantsShareMeans) {
  Dataset a = synth_dataset(5, 4, 3, 50, 0);
  for (float v : a.features) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  // different noise, same class structure: per-class feature means close
  Dataset b = synth_dataset(5, 4, 3, 2000, 1);
  Dataset a2 = synth_dataset(5, 4, 3, 2000, 0);
  EXPECT_NE(a2.features, b.features);
  for (int c = 0; c < 4; ++c) {
    double ma = 0, mb = 0;
    int na = 0, nb = 0;
    for (size_t i = 0; i < a2.size(); ++i)
      if (a2.labels[i] == c) {
        ma += a2.sample(i).features[0];
        na++;
      }
    for (size_t i = 0; i < b.size(); ++i)
      if (b.labels[i] == c) {
        mb += b.sample(i).features[0];
        nb++;
      }
    EXPECT_NEAR(ma / na, mb / nb, 0.02);
  }
}

TEST(Partition, PaperScaleCounts) {
  // pool with 200 samples per class is enough with cross-user replacement
  Dataset pool = synth_dataset(3, 10, 4, 200);
  PartitionSpec spec{/*num_users=*/20, /*minority_labels_per_user=*/2, /*minority_count=*/2,
                     /*majority_count=*/62, /*seed=*/7, /*replace_across_users=*/true};
  auto users = partition_non_iid(pool, spec);
  ASSERT_EQ(users.size(), 20u);
  for (const auto& u : users) {
    EXPECT_EQ(u.size(), 500u);  // 2*2 + 8*62
    auto h = label_histogram(u);
    int minority = 0, majority = 0;
    for (int c : h) {
      if (c == 2) minority++;
      else if (c == 62) majority++;
    }
    EXPECT_EQ(minority, 2);
    EXPECT_EQ(majority, 8);
  }
}

TEST(Partition, SingleUserHistogramMatchesSpecExactly) {
  Dataset pool = synth_dataset(4, 5, 3, 40);
  PartitionSpec spec{1, 2, 3, 7, 11, true};
  auto users = partition_non_iid(pool, spec);
  ASSERT_EQ(users.size(), 1u);
  auto h = label_histogram(users[0]);
  std::multiset<int> got(h.begin(), h.end());
  std::multiset<int> want{3, 3, 7, 7, 7};
  EXPECT_EQ(got, want);
}

TEST(Partition, BalancedDegenerateSpec) {
  Dataset pool = synth_dataset(8, 4, 2, 30);
  PartitionSpec spec{3, 0, 0, 10, 2, true};
  auto users = partition_non_iid(pool, spec);
  for (const auto& u : users) {
    auto h = label_histogram(u);
    for (int c : h) EXPECT_EQ(c, 10);
  }
}

TEST(Partition, DeterministicUnderSeed) {
  Dataset pool = synth_dataset(9, 6, 3, 50);
  PartitionSpec spec{4, 2, 1, 5, 77, true};
  auto a = partition_non_iid(pool, spec);
  auto b = partition_non_iid(pool, spec);
  for (size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].features, b[k].features);
    EXPECT_EQ(a[k].labels, b[k].labels);
  }
  spec.seed = 78;
  auto c = partition_non_iid(pool, spec);
  bool same = true;
  for (size_t k = 0; k < a.size(); ++k) same = same && a[k].features == c[k].features;
  EXPECT_FALSE(same);
}

TEST(Partition, UnionOnlyContainsSourceSamples) {
  Dataset pool = synth_dataset(10, 4, 5, 25);
  std::set<std::vector<float>> source_rows;
  for (size_t i = 0; i < pool.size(); ++i) {
    auto sv = pool.sample(i);
    source_rows.insert(std::vector<float>(sv.features.begin(), sv.features.end()));
  }
  PartitionSpec spec{5, 1, 2, 4, 3, true};
  for (const auto& u : partition_non_iid(pool, spec))
    for (size_t i = 0; i < u.size(); ++i) {
      auto sv = u.sample(i);
      EXPECT_TRUE(source_rows.count(std::vector<float>(sv.features.begin(), sv.features.end())));
    }
}

TEST(Partition, CapacityErrorWithoutReplacement) {
  Dataset pool = synth_dataset(11, 4, 2, 10);  // 10 per class
  PartitionSpec spec{3, 0, 0, 4, 5, /*replace_across_users=*/false};
  // 3 users x 4 samples = 12 > 10 available per class
  EXPECT_THROW(partition_non_iid(pool, spec), std::runtime_error);
  spec.num_users = 2;
  EXPECT_NO_THROW(partition_non_iid(pool, spec));
}

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "lcnet/dataset.hpp"
#include "lcnet/error.hpp"
#include "support/temp_dir.hpp"

using namespace lcnet;
using lcnet::testing::TempDir;

namespace {

constexpr std::size_t kRecord = 1 + 3072;

void write_records(const std::filesystem::path& file, const std::vector<std::vector<unsigned char>>& records) {
  std::ofstream out(file, std::ios::binary);
  for (const auto& r : records) out.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size()));
}

std::vector<unsigned char> record(unsigned char label, unsigned char pixel) {
  std::vector<unsigned char> r(kRecord, pixel);
  r[0] = label;
  return r;
}

void write_train_split(const TempDir& dir, int per_file) {
  for (int f = 1; f <= 5; ++f) {
    std::vector<std::vector<unsigned char>> recs;
    for (int i = 0; i < per_file; ++i) recs.push_back(record(static_cast<unsigned char>((f + i) % 10), static_cast<unsigned char>(40 * i + f)));
    write_records(dir / ("data_batch_" + std::to_string(f) + ".bin"), recs);
  }
}

}  // namespace

TEST(Cifar, Label3AllWhiteIsOne) {
  TempDir dir("cifar");
  write_records(dir / "test_batch.bin", {record(3, 255)});
  CifarOptions opts;
  opts.normalization = Normalization::identity();
  const auto d = load_cifar10(dir.path(), Split::test, opts);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.labels[0], 3);
  for (float v : d.image(0)) EXPECT_EQ(v, 1.0f);
  EXPECT_EQ(d.class_names.size(), 10u);
}

TEST(Cifar, TruncatedFileReportsOffset) {
  TempDir dir("cifar");
  auto recs = std::vector<std::vector<unsigned char>>{record(1, 0), record(2, 0)};
  recs[1].resize(100);
  write_records(dir / "test_batch.bin", recs);
  CifarOptions opts;
  opts.normalization = Normalization::identity();
  try {
    load_cifar10(dir.path(), Split::test, opts);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("offset " + std::to_string(kRecord)), std::string::npos) << e.what();
  }
}

TEST(Cifar, BadLabelReportsOffset) {
  TempDir dir("cifar");
  write_records(dir / "test_batch.bin", {record(1, 0), record(12, 0)});
  CifarOptions opts;
  opts.normalization = Normalization::identity();
  try {
    load_cifar10(dir.path(), Split::test, opts);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("offset " + std::to_string(kRecord)), std::string::npos) << e.what();
  }
}

TEST(Cifar, MissingFilesAndDirectory) {
  TempDir dir("cifar");
  EXPECT_THROW(load_cifar10(dir.path(), Split::train), DataError);
  EXPECT_THROW(load_cifar10(dir / "absent", Split::test), DataError);
}

TEST(Cifar, TrainSplitConcatenatesFilesAndHonoursLimit) {
  TempDir dir("cifar");
  write_train_split(dir, 3);
  const auto all = load_cifar10(dir.path(), Split::train);
  EXPECT_EQ(all.size(), 15u);
  EXPECT_EQ(all.labels[3], 2);
  CifarOptions opts;
  opts.limit = 4;
  const auto some = load_cifar10(dir.path(), Split::train, opts);
  ASSERT_EQ(some.size(), 4u);
  EXPECT_EQ(std::vector<int>(all.labels.begin(), all.labels.begin() + 4), some.labels);
}

TEST(Cifar, TestSplitUsesTrainStatistics) {
  TempDir dir("cifar");
  write_train_split(dir, 2);
  write_records(dir / "test_batch.bin", {record(0, 128)});
  const auto train = load_cifar10(dir.path(), Split::train);
  const auto test = load_cifar10(dir.path(), Split::test);
  EXPECT_EQ(test.normalization.mean, train.normalization.mean);
  EXPECT_EQ(test.normalization.stddev, train.normalization.stddev);
  const float expect = (128.0f / 255.0f - train.normalization.mean[0]) / train.normalization.stddev[0];
  EXPECT_FLOAT_EQ(test.image(0)[0], expect);
}

TEST(Normalization, PopulationStatistics) {
  // channel 0: {0, 1}, channel 1: {0.5, 0.5}
  const std::vector<float> raw{0.0f, 1.0f, 0.5f, 0.5f};
  const auto n = compute_normalization(raw, 2, 2);
  EXPECT_FLOAT_EQ(n.mean[0], 0.5f);
  EXPECT_FLOAT_EQ(n.stddev[0], 0.5f);
  EXPECT_FLOAT_EQ(n.mean[1], 0.5f);
  EXPECT_FLOAT_EQ(n.stddev[1], 1.0f);
}

TEST(Synthetic, SameSeedIdentical) {
  const auto a = make_synthetic(4, 50, 9);
  const auto b = make_synthetic(4, 50, 9);
  const auto c = make_synthetic(4, 50, 10);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, c.images);
}

TEST(Synthetic, EmptyAndLabels) {
  EXPECT_EQ(make_synthetic(3, 0, 1).size(), 0u);
  const auto d = make_synthetic(3, 7, 1);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 2, 0, 1, 2, 0}));
  EXPECT_EQ(d.class_names.size(), 3u);
  EXPECT_NO_THROW(d.validate());
  EXPECT_THROW(make_synthetic(1, 5, 1), ConfigError);
}

TEST(Batching, FixedSeedSameSequence) {
  Rng r1(4), r2(4);
  const auto a = epoch_batches(103, 10, true, r1);
  const auto b = epoch_batches(103, 10, true, r2);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 11u);
  EXPECT_EQ(a.back().size(), 3u);
  std::vector<bool> seen(103, false);
  for (const auto& batch : a)
    for (auto i : batch) seen[i] = true;
  EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 103);
}

TEST(Batching, UnshuffledIsInOrder) {
  Rng rng(1);
  const auto a = epoch_batches(5, 2, false, rng);
  EXPECT_EQ(a, (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}}));
}

TEST(Batching, AugmentationDeterministicAndShapePreserving) {
  const auto d = make_synthetic(2, 8, 3);
  const std::vector<std::size_t> idx{0, 3, 5};
  Rng r1(7), r2(7);
  const Augmentation aug{true, 4, true};
  const auto a = make_batch(d, idx, aug, r1);
  const auto b = make_batch(d, idx, aug, r2);
  EXPECT_EQ(a.images.shape(), (Shape{3, 3, 32, 32}));
  EXPECT_TRUE(std::equal(a.images.data().begin(), a.images.data().end(), b.images.data().begin()));
  EXPECT_EQ(a.labels, (std::vector<int>{0, 1, 1}));
  Rng r3(7);
  const auto plain = make_batch(d, idx, Augmentation{}, r3);
  const auto sz = static_cast<std::size_t>(d.image_size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto img = d.image(idx[j]);
    EXPECT_TRUE(std::equal(img.begin(), img.end(), plain.images.data().begin() + static_cast<std::ptrdiff_t>(j * sz)));
  }
}

#include "lcnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "lcnet/error.hpp"

namespace lcnet {

namespace fs = std::filesystem;

Normalization Normalization::identity(std::size_t channels) {
  return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

void Normalization::validate(std::size_t expected_channels) const {
  if (mean.size() != expected_channels || stddev.size() != expected_channels) {
    throw DataError("normalization has " + std::to_string(mean.size()) + " channels, data has " +
                    std::to_string(expected_channels));
  }
  for (float s : stddev) {
    if (!(s > 0.0f) || !std::isfinite(s)) throw DataError("normalization stddev must be positive");
  }
  for (float m : mean) {
    if (!std::isfinite(m)) throw DataError("normalization mean must be finite");
  }
}

std::span<const float> Dataset::image(std::size_t i) const {
  if (i >= size()) throw DataError("instance " + std::to_string(i) + " out of range");
  const auto sz = static_cast<std::size_t>(image_size());
  return std::span<const float>(images).subspan(i * sz, sz);
}

void Dataset::validate() const {
  if (images.size() != size() * static_cast<std::size_t>(image_size())) {
    throw DataError("image buffer size disagrees with label count");
  }
  const auto classes = static_cast<int>(class_names.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " of instance " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
  normalization.validate(static_cast<std::size_t>(channels));
}

const std::vector<std::string>& cifar10_class_names() {
  static const std::vector<std::string> names{"airplane", "automobile", "bird",  "cat",  "deer",
                                              "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

Normalization compute_normalization(std::span<const float> raw, std::int64_t channels,
                                    std::int64_t pixels) {
  const auto c = static_cast<std::size_t>(channels);
  const auto p = static_cast<std::size_t>(pixels);
  std::vector<double> sum(c, 0.0);
  std::vector<double> sq(c, 0.0);
  const std::size_t n = raw.size() / (c * p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* row = raw.data() + (i * c + ch) * p;
      for (std::size_t j = 0; j < p; ++j) {
        sum[ch] += row[j];
        sq[ch] += static_cast<double>(row[j]) * row[j];
      }
    }
  }
  Normalization norm = Normalization::identity(c);
  if (n == 0) return norm;
  const double count = static_cast<double>(n * p);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double m = sum[ch] / count;
    const double var = std::max(0.0, sq[ch] / count - m * m);
    norm.mean[ch] = static_cast<float>(m);
    norm.stddev[ch] = var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f;
  }
  return norm;
}

void apply_normalization(std::span<float> images, const Normalization& norm, std::int64_t pixels) {
  const std::size_t c = norm.channels();
  const auto p = static_cast<std::size_t>(pixels);
  const std::size_t n = images.size() / (c * p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* row = images.data() + (i * c + ch) * p;
      const float m = norm.mean[ch];
      const float inv = 1.0f / norm.stddev[ch];
      for (std::size_t j = 0; j < p; ++j) row[j] = (row[j] - m) * inv;
    }
  }
}

namespace {

constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

std::vector<fs::path> cifar_files(const fs::path& dir, Split split) {
  if (split == Split::test) return {dir / "test_batch.bin"};
  std::vector<fs::path> files;
  for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  return files;
}

void read_cifar_file(const fs::path& file, std::optional<std::size_t> remaining,
                     std::vector<float>& raw, std::vector<int>& labels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("missing CIFAR-10 file: " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::size_t records = bytes.size() / kCifarRecord;
  if (bytes.size() % kCifarRecord != 0) {
    throw DataError("truncated record in " + file.string() + " at byte offset " +
                    std::to_string(records * kCifarRecord) + " (file has " +
                    std::to_string(bytes.size()) + " bytes)");
  }
  const std::size_t take = remaining ? std::min(records, *remaining) : records;
  for (std::size_t r = 0; r < take; ++r) {
    const std::size_t offset = r * kCifarRecord;
    const unsigned label = bytes[offset];
    if (label > 9) {
      throw DataError("label byte " + std::to_string(label) + " > 9 in " + file.string() +
                      " at byte offset " + std::to_string(offset));
    }
    labels.push_back(static_cast<int>(label));
    for (std::size_t j = 0; j < kCifarPixels; ++j) {
      raw.push_back(static_cast<float>(bytes[offset + 1 + j]) / 255.0f);
    }
  }
}

void read_cifar_split(const fs::path& dir, Split split, std::optional<std::size_t> limit,
                      std::vector<float>& raw, std::vector<int>& labels) {
  for (const auto& file : cifar_files(dir, split)) {
    std::optional<std::size_t> remaining;
    if (limit) {
      if (labels.size() >= *limit) break;
      remaining = *limit - labels.size();
    }
    read_cifar_file(file, remaining, raw, labels);
  }
}

}  // namespace

Dataset load_cifar10(const fs::path& dir, Split split, const CifarOptions& options) {
  if (!fs::is_directory(dir)) throw DataError("CIFAR-10 directory not found: " + dir.string());
  Dataset d;
  d.class_names = cifar10_class_names();
  read_cifar_split(dir, split, options.limit, d.images, d.labels);
  if (options.normalization) {
    d.normalization = *options.normalization;
  } else if (split == Split::train) {
    d.normalization = compute_normalization(d.images, 3, 32 * 32);
  } else {
    std::vector<float> train_raw;
    std::vector<int> train_labels;
    read_cifar_split(dir, Split::train, std::nullopt, train_raw, train_labels);
    d.normalization = compute_normalization(train_raw, 3, 32 * 32);
  }
  d.normalization.validate(3);
  apply_normalization(d.images, d.normalization, 32 * 32);
  return d;
}

Dataset make_synthetic(int classes, std::size_t n, std::uint64_t seed,
                       const std::optional<Normalization>& normalization) {
  if (classes < 2 || classes > 10) throw ConfigError("data.classes", "synthetic data needs 2..10 classes");
  Dataset d;
  for (int k = 0; k < classes; ++k) d.class_names.push_back("class" + std::to_string(k));
  const std::int64_t side = 32;
  const auto pixels = static_cast<std::size_t>(side * side);
  d.images.resize(n * 3 * pixels);
  d.labels.resize(n);
  Rng rng(seed);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % static_cast<std::size_t>(classes));
    d.labels[i] = k;
    const double angle = std::numbers::pi * k / classes;
    const double freq = 3.0 + 2.0 * (k % 3);
    const double phase = rng.uniform(0.0, two_pi);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double tint = 0.5 + 0.5 * std::cos(two_pi * k / classes + two_pi * ch / 3.0);
      float* plane = d.images.data() + (i * 3 + ch) * pixels;
      for (std::int64_t y = 0; y < side; ++y) {
        for (std::int64_t x = 0; x < side; ++x) {
          const double t = two_pi * freq * (x * ca + y * sa) / side + phase;
          double v = 0.5 + 0.1 * (tint - 0.5) + 0.35 * (0.3 + 0.7 * tint) * std::sin(t) +
                     rng.normal(0.0, 0.05);
          v = std::clamp(v, 0.0, 1.0);
          plane[y * side + x] = static_cast<float>(v);
        }
      }
    }
  }
  d.normalization = normalization ? *normalization : compute_normalization(d.images, 3, side * side);
  d.normalization.validate(3);
  apply_normalization(d.images, d.normalization, side * side);
  return d;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    bool shuffle, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                 const Augmentation& augmentation, Rng& rng) {
  const std::int64_t c = data.channels;
  const std::int64_t h = data.height;
  const std::int64_t w = data.width;
  const auto sz = static_cast<std::size_t>(data.image_size());
  std::vector<float> out(indices.size() * sz, 0.0f);
  Batch batch;
  batch.indices.assign(indices.begin(), indices.end());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto src = data.image(indices[b]);
    batch.labels.push_back(data.labels[indices[b]]);
    float* dst = out.data() + b * sz;
    if (!augmentation.enabled) {
      std::copy(src.begin(), src.end(), dst);
      continue;
    }
    const std::int64_t pad = augmentation.pad;
    const auto dy = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
    const auto dx = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
    const bool flip = augmentation.flip && rng.bernoulli(0.5);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t ox = flip ? w - 1 - x : x;
          const std::int64_t sx = ox + dx;
          if (sx < 0 || sx >= w) continue;
          dst[(ch * h + y) * w + x] = src[static_cast<std::size_t>((ch * h + sy) * w + sx)];
        }
      }
    }
  }
  batch.images = Tensor<float>({static_cast<std::int64_t>(indices.size()), c, h, w}, std::move(out));
  return batch;
}

}  // namespace lcnet

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcnet/random.hpp"
#include "lcnet/tensor.hpp"

namespace lcnet {

// Per-channel affine normalisation applied after scaling pixels to [0, 1].
struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;

  static Normalization identity(std::size_t channels = 3);
  std::size_t channels() const { return mean.size(); }
  void validate(std::size_t expected_channels) const;
};

struct Dataset {
  std::int64_t channels = 3;
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::vector<float> images;  // N x C x H x W, normalised
  std::vector<int> labels;
  std::vector<std::string> class_names;
  Normalization normalization;

  std::size_t size() const { return labels.size(); }
  std::int64_t image_size() const { return channels * height * width; }
  std::span<const float> image(std::size_t i) const;
  void validate() const;
};

const std::vector<std::string>& cifar10_class_names();

enum class Split { train, test };

struct CifarOptions {
  // Keep only the first `limit` records, in file order.
  std::optional<std::size_t> limit;
  // When absent, statistics of the loaded training records are used. For the test split they
  // are computed from the training files in the same directory.
  std::optional<Normalization> normalization;
};

// Standard binary layout: data_batch_1..5.bin for train, test_batch.bin for test; each record is
// one label byte followed by 3072 channel-major pixel bytes.
Dataset load_cifar10(const std::filesystem::path& dir, Split split, const CifarOptions& options = {});

// Channel means and standard deviations (population) of [0, 1]-scaled images.
Normalization compute_normalization(std::span<const float> raw, std::int64_t channels,
                                    std::int64_t pixels);

// Normalises raw [0, 1] images in place.
void apply_normalization(std::span<float> images, const Normalization& norm, std::int64_t pixels);

// Procedural 32x32x3 images: class k is an oriented grating with class-specific angle,
// frequency and colour, random phase and additive noise. Statistics come from the generated
// images unless `normalization` is supplied.
Dataset make_synthetic(int classes, std::size_t n, std::uint64_t seed,
                       const std::optional<Normalization>& normalization = std::nullopt);

struct Augmentation {
  bool enabled = false;
  std::int64_t pad = 4;
  bool flip = true;
};

struct Batch {
  Tensor<float> images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

// Index order for one epoch; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    bool shuffle, Rng& rng);

// Gathers (and optionally augments) the given instances. Zero padding is applied in the
// normalised space.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                 const Augmentation& augmentation, Rng& rng);

}  // namespace lcnet

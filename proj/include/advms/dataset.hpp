#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advms/architecture.hpp"
#include "advms/tensor.hpp"

namespace advms {

/// Images (N, C, H, W) in [0, 1] with labels. `ids` identify examples
/// across subsetting and shuffling; per-example random streams key on them.
struct Dataset {
  Tensor images;
  std::vector<std::size_t> labels;
  std::vector<std::uint64_t> ids;
  std::size_t num_classes = 0;
  DatasetId source = DatasetId::synthetic;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
  std::size_t image_size() const { return images.size() / size(); }

  std::span<const float> image(std::size_t i) const { return images.data().subspan(i * image_size(), image_size()); }
  Tensor image_tensor(std::size_t i) const;

  /// Examples at `indices`, in that order, keeping their ids.
  Dataset take(std::span<const std::size_t> indices) const;

  /// Throws FormatError if counts, pixel range or labels are inconsistent.
  void validate() const;

  /// FNV-style fingerprint over shape, pixels, labels and ids.
  std::uint64_t fingerprint() const;
};

/// IDX files (images magic 2051, labels magic 2049, big-endian headers).
Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// CIFAR-10 binary batches: records of one label byte and 3072 pixel bytes
/// (R, G, B planes of 32x32).
Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths);

/// Writes images quantized to bytes in the CIFAR-10 record layout. Images
/// must be (N, 3, 32, 32) with labels < 10.
void save_cifar10(const Dataset& dataset, const std::filesystem::path& path);

/// Single-channel side x side images: a fixed block template per class plus
/// seeded uniform noise of amplitude 0.1, clipped to [0, 1]. Labels cycle
/// through the classes (example i has label i mod num_classes).
Dataset make_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t side, std::uint64_t seed);

/// The noiseless class template used by make_synthetic.
std::vector<float> synthetic_template(std::size_t num_classes, std::size_t label, std::size_t side);

/// n examples sampled without replacement; deterministic in seed.
Dataset subset(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Index lists partitioning [0, n); shuffled with the seed when requested.
/// The last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                              bool shuffle);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace advms

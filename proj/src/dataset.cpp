#include "advms/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <cmath>
#include <numeric>

#include "advms/error.hpp"
#include "advms/file_util.hpp"
#include "advms/rng.hpp"

namespace advms {

Tensor Dataset::image_tensor(std::size_t i) const {
  const auto px = image(i);
  return Tensor(image_shape(), std::vector<float>(px.begin(), px.end()));
}

Dataset Dataset::take(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ArgumentError("cannot take an empty selection of a dataset");
  const std::size_t stride = image_size();
  std::vector<float> pixels;
  pixels.reserve(indices.size() * stride);
  Dataset out;
  for (std::size_t idx : indices) {
    if (idx >= size()) throw ArgumentError("example index " + std::to_string(idx) + " out of range");
    const auto px = image(idx);
    pixels.insert(pixels.end(), px.begin(), px.end());
    out.labels.push_back(labels[idx]);
    out.ids.push_back(ids[idx]);
  }
  Shape shape = images.shape();
  shape[0] = indices.size();
  out.images = Tensor(std::move(shape), std::move(pixels));
  out.num_classes = num_classes;
  out.source = source;
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw FormatError("dataset images must be (N, C, H, W)");
  if (images.dim(0) != labels.size() || ids.size() != labels.size()) {
    throw FormatError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("dataset pixel outside [0, 1]");
  }
  for (std::size_t y : labels) {
    if (y >= num_classes) throw FormatError("dataset label " + std::to_string(y) + " >= num_classes");
  }
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = hash_combine(0x64617461ULL, num_classes);
  h = hash_combine(h, static_cast<std::uint64_t>(source));
  for (std::size_t d : images.shape()) h = hash_combine(h, d);
  std::uint64_t fnv = 0xcbf29ce484222325ULL;
  for (float v : images.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    fnv = (fnv ^ bits) * 0x100000001b3ULL;
  }
  h = hash_combine(h, fnv);
  for (std::size_t i = 0; i < size(); ++i) {
    h = hash_combine(h, labels[i]);
    h = hash_combine(h, ids[i]);
  }
  return h;
}

namespace {

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t pos) {
  return (std::uint32_t{b[pos]} << 24) | (std::uint32_t{b[pos + 1]} << 16) | (std::uint32_t{b[pos + 2]} << 8) |
         std::uint32_t{b[pos + 3]};
}

std::vector<std::uint64_t> iota_ids(std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  return ids;
}

}  // namespace

Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (img.size() < 16 || read_be32(img, 0) != 2051) {
    throw FormatError("'" + images_path.string() + "' is not an IDX image file (magic 2051)");
  }
  if (lab.size() < 8 || read_be32(lab, 0) != 2049) {
    throw FormatError("'" + labels_path.string() + "' is not an IDX label file (magic 2049)");
  }
  const std::size_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  if (read_be32(lab, 4) != n) {
    throw FormatError("MNIST image count " + std::to_string(n) + " does not match label count " +
                      std::to_string(read_be32(lab, 4)));
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError("MNIST file declares an empty dataset");
  if (img.size() != 16 + n * rows * cols || lab.size() != 8 + n) {
    throw FormatError("MNIST file length does not match its header");
  }
  std::vector<float> pixels(n * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<float>(img[16 + i]) / 255.0f;
  Dataset ds;
  ds.images = Tensor({n, 1, rows, cols}, std::move(pixels));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] > 9) throw FormatError("MNIST label byte " + std::to_string(lab[8 + i]) + " > 9");
    ds.labels[i] = lab[8 + i];
  }
  ds.ids = iota_ids(n);
  ds.num_classes = 10;
  ds.source = DatasetId::mnist;
  return ds;
}

Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths) {
  constexpr std::size_t kRecord = 3073, kPixels = 3072;
  std::vector<float> pixels;
  Dataset ds;
  for (const auto& path : batch_paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw FormatError("CIFAR-10 file '" + path.string() + "' length " + std::to_string(bytes.size()) +
                        " is not a multiple of 3073");
    }
    for (std::size_t r = 0; r < bytes.size() / kRecord; ++r) {
      const unsigned char* rec = bytes.data() + r * kRecord;
      if (rec[0] > 9) throw FormatError("CIFAR-10 label byte " + std::to_string(rec[0]) + " > 9");
      ds.labels.push_back(rec[0]);
      for (std::size_t i = 0; i < kPixels; ++i) pixels.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
    }
  }
  if (ds.labels.empty()) throw ArgumentError("load_cifar10 needs at least one batch file");
  ds.images = Tensor({ds.labels.size(), 3, 32, 32}, std::move(pixels));
  ds.ids = iota_ids(ds.labels.size());
  ds.num_classes = 10;
  ds.source = DatasetId::cifar10;
  return ds;
}

void save_cifar10(const Dataset& dataset, const std::filesystem::path& path) {
  if (dataset.image_shape() != Shape{3, 32, 32}) throw ShapeError("CIFAR-10 records hold (3, 32, 32) images");
  std::vector<unsigned char> bytes;
  bytes.reserve(dataset.size() * 3073);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i] > 9) throw ArgumentError("CIFAR-10 labels must be < 10");
    bytes.push_back(static_cast<unsigned char>(dataset.labels[i]));
    for (float v : dataset.image(i)) {
      const float q = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
      bytes.push_back(static_cast<unsigned char>(q));
    }
  }
  write_file(path, bytes);
}

std::vector<float> synthetic_template(std::size_t num_classes, std::size_t label, std::size_t side) {
  // A 4x4 grid of blocks; each class switches on a distinct subset of
  // blocks. Subsets are drawn from a fixed stream and accepted only at
  // Hamming distance >= 3 from every earlier class.
  constexpr float kOn = 0.75f, kOff = 0.25f;
  if (label >= num_classes) throw IndexError("synthetic label out of range");
  Rng rng(0x7e3a1c5dULL);
  std::vector<std::uint32_t> masks;
  std::size_t attempts = 0;
  while (masks.size() <= label) {
    if (++attempts > 1000000) throw ArgumentError("too many synthetic classes for distinct templates");
    const auto m = static_cast<std::uint32_t>(rng() & 0xffffu);
    const int on = std::popcount(m);
    if (on < 5 || on > 11) continue;
    const bool far = std::all_of(masks.begin(), masks.end(), [&](std::uint32_t o) { return std::popcount(o ^ m) >= 3; });
    if (far) masks.push_back(m);
  }
  const std::uint32_t mask = masks[label];
  std::vector<float> img(side * side);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const std::size_t block = (r * 4 / side) * 4 + (c * 4 / side);
      img[r * side + c] = (mask >> block) & 1u ? kOn : kOff;
    }
  return img;
}

Dataset make_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t side, std::uint64_t seed) {
  if (num_classes < 2) throw ArgumentError("make_synthetic needs num_classes >= 2");
  if (per_class < 1) throw ArgumentError("make_synthetic needs per_class >= 1");
  if (side < 4) throw ArgumentError("make_synthetic needs side >= 4");
  std::vector<std::vector<float>> templates;
  for (std::size_t c = 0; c < num_classes; ++c) templates.push_back(synthetic_template(num_classes, c, side));
  const std::size_t n = num_classes * per_class;
  Rng rng = derive_stream(seed, "synthetic");
  std::vector<float> pixels(n * side * side);
  Dataset ds;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % num_classes;
    ds.labels[i] = y;
    for (std::size_t p = 0; p < side * side; ++p) {
      const double v = templates[y][p] + uniform(rng, -0.1, 0.1);
      pixels[i * side * side + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  ds.images = Tensor({n, 1, side, side}, std::move(pixels));
  ds.ids = iota_ids(n);
  ds.num_classes = num_classes;
  ds.source = DatasetId::synthetic;
  return ds;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derive_stream(seed, "permutation");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

Dataset subset(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n > dataset.size()) {
    throw ArgumentError("subset of " + std::to_string(n) + " requested from " + std::to_string(dataset.size()) +
                        " examples");
  }
  if (n == 0) throw ArgumentError("subset size must be positive");
  auto order = permutation(dataset.size(), seed);
  order.resize(n);
  return dataset.take(order);
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                              bool shuffle) {
  if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  std::vector<std::size_t> order;
  if (shuffle) {
    order = permutation(n, seed);
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

}  // namespace advms

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "advms/tensor.hpp"

namespace advms {

enum class DatasetId : std::uint8_t { mnist = 0, cifar10 = 1, synthetic = 2 };

std::string_view to_string(DatasetId id);
DatasetId parse_dataset_id(std::string_view name);

enum class LayerKind { conv, relu, max_pool, dense, output };

/// One entry of the layer chain. `size` is the filter count (conv) or unit
/// count (dense/output); `kh`/`kw` are the kernel or pool window.
struct LayerSpec {
  LayerKind kind;
  std::size_t size = 0;
  std::size_t kh = 0;
  std::size_t kw = 0;

  static LayerSpec conv(std::size_t filters, std::size_t kh, std::size_t kw) {
    return {LayerKind::conv, filters, kh, kw};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec max_pool(std::size_t h, std::size_t w) { return {LayerKind::max_pool, 0, h, w}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, units}; }
  static LayerSpec output(std::size_t units) { return {LayerKind::output, units}; }

  bool has_params() const {
    return kind == LayerKind::conv || kind == LayerKind::dense || kind == LayerKind::output;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Activation shape (channels, height, width). Dense activations are
/// (units, 1, 1).
struct Volume {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t size() const { return c * h * w; }
  friend bool operator==(const Volume&, const Volume&) = default;
};

/// Synthetic toy-net parameters: square single-channel images.
struct SyntheticShape {
  std::size_t side = 12;
  std::size_t num_classes = 4;
  std::size_t channels = 1;
};

/// Ordered layer chain plus input shape. Construction validates the chain;
/// convolutions are stride 1 with no padding, pooling windows are
/// non-overlapping and floor odd extents.
class Architecture {
 public:
  Architecture(DatasetId id, Volume input, std::vector<LayerSpec> layers);

  DatasetId id() const { return id_; }
  const Volume& input() const { return input_; }
  Shape input_shape() const { return {input_.c, input_.h, input_.w}; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  /// Shape entering layer i; in_volume(layers().size()) is the logits shape.
  const Volume& in_volume(std::size_t i) const { return volumes_.at(i); }
  const Volume& out_volume(std::size_t i) const { return volumes_.at(i + 1); }
  std::size_t num_classes() const { return volumes_.back().c; }

  /// Weight and bias shapes of every parameterized layer, in chain order.
  /// Conv weights are (filters, in_channels, kh, kw); dense weights are
  /// (units, in_features).
  std::vector<Shape> weight_shapes() const;
  std::vector<Shape> bias_shapes() const;
  std::size_t parameter_count() const;

  /// Layers excluding ReLU markers.
  std::vector<LayerSpec> trunk() const;

  /// Stable 64-bit fingerprint of the id, input shape and layer chain.
  std::uint64_t fingerprint() const;

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.id_ == b.id_ && a.input_ == b.input_ && a.layers_ == b.layers_;
  }

 private:
  DatasetId id_;
  Volume input_;
  std::vector<LayerSpec> layers_;
  std::vector<Volume> volumes_;
};

/// Table-1 base models for mnist/cifar10 (ReLU after every conv and dense
/// layer except the output); for synthetic, conv 8x(3,3) -> pool (2,2) ->
/// dense 32 -> output.
Architecture build_architecture(DatasetId id, const SyntheticShape& synthetic = {});
Architecture build_architecture(std::string_view name, const SyntheticShape& synthetic = {});

}  // namespace advms

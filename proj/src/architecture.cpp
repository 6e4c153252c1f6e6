#include "advms/architecture.hpp"

#include <string>

#include "advms/error.hpp"
#include "advms/rng.hpp"

namespace advms {

std::string_view to_string(DatasetId id) {
  switch (id) {
    case DatasetId::mnist: return "mnist";
    case DatasetId::cifar10: return "cifar10";
    case DatasetId::synthetic: return "synthetic";
  }
  return "unknown";
}

DatasetId parse_dataset_id(std::string_view name) {
  if (name == "mnist") return DatasetId::mnist;
  if (name == "cifar10") return DatasetId::cifar10;
  if (name == "synthetic") return DatasetId::synthetic;
  throw ConfigError("unknown dataset id '" + std::string(name) + "' (expected mnist, cifar10 or synthetic)");
}

Architecture::Architecture(DatasetId id, Volume input, std::vector<LayerSpec> layers)
    : id_(id), input_(input), layers_(std::move(layers)) {
  if (input_.size() == 0) throw ShapeError("architecture input shape must be positive");
  if (layers_.empty() || layers_.back().kind != LayerKind::output) {
    throw ShapeError("architecture must end with an output layer");
  }
  volumes_.push_back(input_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Volume& in = volumes_.back();
    Volume out;
    switch (l.kind) {
      case LayerKind::conv:
        if (l.size == 0 || l.kh == 0 || l.kw == 0 || l.kh > in.h || l.kw > in.w) {
          throw ShapeError("conv layer " + std::to_string(i) + " does not fit its " + std::to_string(in.h) + "x" +
                           std::to_string(in.w) + " input");
        }
        out = {l.size, in.h - l.kh + 1, in.w - l.kw + 1};
        break;
      case LayerKind::relu:
        out = in;
        break;
      case LayerKind::max_pool:
        if (l.kh == 0 || l.kw == 0 || l.kh > in.h || l.kw > in.w) {
          throw ShapeError("pool layer " + std::to_string(i) + " does not fit its input");
        }
        out = {in.c, in.h / l.kh, in.w / l.kw};
        break;
      case LayerKind::dense:
      case LayerKind::output:
        if (l.size == 0) throw ShapeError("dense layer " + std::to_string(i) + " has no units");
        if (l.kind == LayerKind::output && i + 1 != layers_.size()) {
          throw ShapeError("output layer must be last");
        }
        out = {l.size, 1, 1};
        break;
    }
    volumes_.push_back(out);
  }
}

std::vector<Shape> Architecture::weight_shapes() const {
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Volume& in = volumes_[i];
    if (l.kind == LayerKind::conv) shapes.push_back({l.size, in.c, l.kh, l.kw});
    if (l.kind == LayerKind::dense || l.kind == LayerKind::output) shapes.push_back({l.size, in.size()});
  }
  return shapes;
}

std::vector<Shape> Architecture::bias_shapes() const {
  std::vector<Shape> shapes;
  for (const LayerSpec& l : layers_) {
    if (l.has_params()) shapes.push_back({l.size});
  }
  return shapes;
}

std::size_t Architecture::parameter_count() const {
  std::size_t n = 0;
  for (const Shape& s : weight_shapes()) n += shape_size(s);
  for (const Shape& s : bias_shapes()) n += shape_size(s);
  return n;
}

std::vector<LayerSpec> Architecture::trunk() const {
  std::vector<LayerSpec> out;
  for (const LayerSpec& l : layers_) {
    if (l.kind != LayerKind::relu) out.push_back(l);
  }
  return out;
}

std::uint64_t Architecture::fingerprint() const {
  std::uint64_t h = hash_combine(0x61726368ULL, static_cast<std::uint64_t>(id_));
  for (std::size_t v : {input_.c, input_.h, input_.w}) h = hash_combine(h, v);
  for (const LayerSpec& l : layers_) {
    h = hash_combine(h, static_cast<std::uint64_t>(l.kind));
    h = hash_combine(h, l.size);
    h = hash_combine(h, l.kh);
    h = hash_combine(h, l.kw);
  }
  return h;
}

namespace {

void push_with_relu(std::vector<LayerSpec>& layers, LayerSpec spec) {
  layers.push_back(spec);
  layers.push_back(LayerSpec::relu());
}

Architecture table_one(DatasetId id, Volume input, std::size_t conv_a, std::size_t conv_b, std::size_t units) {
  std::vector<LayerSpec> layers;
  push_with_relu(layers, LayerSpec::conv(conv_a, 3, 3));
  push_with_relu(layers, LayerSpec::conv(conv_a, 3, 3));
  layers.push_back(LayerSpec::max_pool(2, 2));
  push_with_relu(layers, LayerSpec::conv(conv_b, 3, 3));
  push_with_relu(layers, LayerSpec::conv(conv_b, 3, 3));
  layers.push_back(LayerSpec::max_pool(2, 2));
  push_with_relu(layers, LayerSpec::dense(units));
  push_with_relu(layers, LayerSpec::dense(units));
  layers.push_back(LayerSpec::output(10));
  return Architecture(id, input, std::move(layers));
}

}  // namespace

Architecture build_architecture(DatasetId id, const SyntheticShape& synthetic) {
  switch (id) {
    case DatasetId::mnist: return table_one(id, {1, 28, 28}, 32, 64, 200);
    case DatasetId::cifar10: return table_one(id, {3, 32, 32}, 64, 128, 256);
    case DatasetId::synthetic: {
      if (synthetic.side < 4 || synthetic.side % 2 != 0) {
        throw ConfigError("synthetic architecture needs an even image side >= 4, got " +
                          std::to_string(synthetic.side));
      }
      if (synthetic.num_classes < 2) throw ConfigError("synthetic architecture needs at least 2 classes");
      if (synthetic.channels == 0) throw ConfigError("synthetic architecture needs at least 1 channel");
      std::vector<LayerSpec> layers;
      push_with_relu(layers, LayerSpec::conv(8, 3, 3));
      layers.push_back(LayerSpec::max_pool(2, 2));
      push_with_relu(layers, LayerSpec::dense(32));
      layers.push_back(LayerSpec::output(synthetic.num_classes));
      return Architecture(id, {synthetic.channels, synthetic.side, synthetic.side}, std::move(layers));
    }
  }
  throw ConfigError("unknown dataset id");
}

Architecture build_architecture(std::string_view name, const SyntheticShape& synthetic) {
  return build_architecture(parse_dataset_id(name), synthetic);
}

}  // namespace advms

#pragma once

#include <cstdint>
#include <vector>

#include "advms/architecture.hpp"
#include "advms/tensor.hpp"

namespace advms {

template <typename T>
struct LayerParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// One sub-model: architecture, parameters (one entry per conv/dense/output
/// layer, in chain order), the seed that produced the initial weights and
/// the L-infinity budget it was trained with (0 = standard training).
template <typename T>
struct BasicModel {
  Architecture arch;
  std::vector<LayerParams<T>> params;
  std::uint64_t init_seed = 0;
  double train_epsilon = 0.0;

  std::size_t parameter_count() const;

  /// All parameters concatenated (weights then bias, layer by layer).
  std::vector<T> flatten() const;

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> out{arch, {}, init_seed, train_epsilon};
    out.params.reserve(params.size());
    for (const auto& p : params) out.params.push_back({p.weight.template cast<U>(), p.bias.template cast<U>()});
    return out;
  }
};

using Model = BasicModel<float>;
using ModelD = BasicModel<double>;

/// Weights uniform in +-sqrt(6 / fan_in), biases zero. Deterministic in
/// (arch, seed).
Model init_params(const Architecture& arch, std::uint64_t seed);

/// Throws ShapeError if the parameter tensors do not match the architecture.
template <typename T>
void validate_params(const BasicModel<T>& model);

/// Parameter gradients with the same layout as BasicModel::params.
template <typename T>
using ParamGrads = std::vector<LayerParams<T>>;

template <typename T>
ParamGrads<T> zero_grads(const Architecture& arch);

}  // namespace advms

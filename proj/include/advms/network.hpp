#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "advms/model.hpp"
#include "advms/tensor.hpp"

namespace advms {

enum class LossKind { ce, cw };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

/// -log softmax(logits)[y], softmax with max subtraction.
template <typename T>
T loss_ce(std::span<const T> logits, std::size_t y);

/// max(logits[y] - max_{i != y} logits[i], -kappa). Attackers minimize it.
template <typename T>
T loss_cw(std::span<const T> logits, std::size_t y, T kappa);

/// Loss value and writes d loss / d logits into `grad`.
template <typename T>
T loss_and_grad(LossKind kind, std::span<const T> logits, std::size_t y, T kappa, std::span<T> grad);

/// Index of the largest logit, lowest index on ties.
template <typename T>
std::size_t argmax(std::span<const T> logits);

/// Per-example forward/backward executor bound to one model. Holds scratch
/// buffers and a transposed copy of the weights, so it is cheap to reuse
/// across many examples but must be rebuilt after the model's parameters
/// change. Not thread-safe; give each worker its own instance.
///
/// Every example is computed independently with a fixed accumulation order,
/// so results do not depend on batch composition or evaluation order.
template <typename T>
class Evaluator {
 public:
  explicit Evaluator(const BasicModel<T>& model);
  ~Evaluator();
  Evaluator(Evaluator&&) noexcept;
  Evaluator& operator=(Evaluator&&) noexcept;

  const BasicModel<T>& model() const;

  /// Pre-softmax logits for one example laid out as (C, H, W).
  std::span<const T> forward(std::span<const T> x);

  /// Loss at x; fills `input_grad` (if non-empty) with d loss / d x and
  /// adds `scale` * d loss / d params into `param_grads` (if non-null).
  T loss_gradient(std::span<const T> x, std::size_t y, LossKind kind, T kappa, std::span<T> input_grad,
                  ParamGrads<T>* param_grads = nullptr, T scale = T{1});

  /// Fingerprint of the piecewise-linear regime at the last forward: ReLU
  /// masks and pooling argmax positions. Gradient checking uses it to
  /// detect finite-difference probes that straddle a kink.
  std::vector<std::uint32_t> activation_pattern() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Tensor forward(const Model& model, const Tensor& x);
TensorD forward(const ModelD& model, const TensorD& x);

template <typename T>
BasicTensor<T> input_gradient(const BasicModel<T>& model, const BasicTensor<T>& x, std::size_t y,
                              LossKind kind, T kappa = T{0});

/// Examples of one batch: images share the architecture's input shape.
template <typename T>
struct BasicBatch {
  std::vector<BasicTensor<T>> images;
  std::vector<std::size_t> labels;
};

using Batch = BasicBatch<float>;

/// Gradient of the mean batch loss with respect to every parameter.
template <typename T>
ParamGrads<T> param_gradients(const BasicModel<T>& model, const BasicBatch<T>& batch, LossKind kind,
                              T kappa = T{0});

template <typename T>
std::size_t predict_class(const BasicModel<T>& model, const BasicTensor<T>& x);

}  // namespace advms

#pragma once

#include <cstddef>
#include <cstdint>

#include "advms/model.hpp"
#include "advms/network.hpp"

namespace advms {

struct GradCheckOptions {
  double step = 1e-5;
  /// Below this magnitude errors are measured on an absolute scale.
  double floor = 1e-4;
  std::size_t input_coords = 32;
  std::size_t param_coords = 6;  ///< per weight/bias tensor
  std::size_t directions = 2;    ///< random sparse +-1 directions per tensor
  std::size_t direction_support = 32;
  double kappa = 0.0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double input_error = 0.0;
  double param_error = 0.0;
  std::size_t checks = 0;
  /// Probes discarded because x +- h crossed a ReLU, pooling or margin kink.
  std::size_t skipped = 0;
};

/// Worst relative error |a - n| / max(|a|, |n|, floor) between the analytic
/// input/parameter gradients and central differences, over sampled
/// coordinates and sparse random directions. 0 vs 0 counts as error 0.
GradCheckResult grad_check(const ModelD& model, const TensorD& x, std::size_t y, LossKind kind,
                           const GradCheckOptions& options = {});

inline GradCheckResult grad_check(const Model& model, const Tensor& x, std::size_t y, LossKind kind,
                                  const GradCheckOptions& options = {}) {
  return grad_check(model.cast<double>(), x.cast<double>(), y, kind, options);
}

}  // namespace advms

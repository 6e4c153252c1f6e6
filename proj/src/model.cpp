#include "advms/model.hpp"

#include <cmath>

#include "advms/error.hpp"
#include "advms/rng.hpp"

namespace advms {

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.weight.size() + p.bias.size();
  return n;
}

template <typename T>
std::vector<T> BasicModel<T>::flatten() const {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (const auto& p : params) {
    out.insert(out.end(), p.weight.data().begin(), p.weight.data().end());
    out.insert(out.end(), p.bias.data().begin(), p.bias.data().end());
  }
  return out;
}

Model init_params(const Architecture& arch, std::uint64_t seed) {
  Rng rng = derive_stream(seed, "init");
  Model model{arch, {}, seed, 0.0};
  const auto weights = arch.weight_shapes();
  const auto biases = arch.bias_shapes();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Tensor w(weights[i]);
    const std::size_t fan_in = w.size() / weights[i][0];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : w.data()) v = static_cast<float>(uniform(rng, -limit, limit));
    model.params.push_back({std::move(w), Tensor(biases[i])});
  }
  return model;
}

template <typename T>
void validate_params(const BasicModel<T>& model) {
  const auto weights = model.arch.weight_shapes();
  const auto biases = model.arch.bias_shapes();
  if (model.params.size() != weights.size()) {
    throw ShapeError("model has " + std::to_string(model.params.size()) + " parameter layers, architecture needs " +
                     std::to_string(weights.size()));
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (model.params[i].weight.shape() != weights[i] || model.params[i].bias.shape() != biases[i]) {
      throw ShapeError("parameter layer " + std::to_string(i) + " has shape " +
                       shape_string(model.params[i].weight.shape()) + ", expected " + shape_string(weights[i]));
    }
  }
}

template <typename T>
ParamGrads<T> zero_grads(const Architecture& arch) {
  ParamGrads<T> grads;
  const auto weights = arch.weight_shapes();
  const auto biases = arch.bias_shapes();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    grads.push_back({BasicTensor<T>(weights[i]), BasicTensor<T>(biases[i])});
  }
  return grads;
}

template struct BasicModel<float>;
template struct BasicModel<double>;
template void validate_params(const BasicModel<float>&);
template void validate_params(const BasicModel<double>&);
template ParamGrads<float> zero_grads<float>(const Architecture&);
template ParamGrads<double> zero_grads<double>(const Architecture&);

}  // namespace advms

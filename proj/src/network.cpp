#include "advms/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "advms/error.hpp"
#include "kernels.hpp"

namespace advms {

std::string_view to_string(LossKind kind) { return kind == LossKind::ce ? "ce" : "cw"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "ce") return LossKind::ce;
  if (name == "cw") return LossKind::cw;
  throw ConfigError("unknown loss kind '" + std::string(name) + "' (expected ce or cw)");
}

namespace {

void check_label(std::size_t y, std::size_t classes) {
  if (y >= classes) {
    throw IndexError("class index " + std::to_string(y) + " out of range for " + std::to_string(classes) +
                     " classes");
  }
}

/// Largest logit other than y, lowest index on ties.
template <typename T>
std::size_t runner_up(std::span<const T> logits, std::size_t y) {
  std::size_t best = y == 0 ? 1 : 0;
  for (std::size_t i = best + 1; i < logits.size(); ++i) {
    if (i != y && logits[i] > logits[best]) best = i;
  }
  return best;
}

}  // namespace

template <typename T>
std::size_t argmax(std::span<const T> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

template <typename T>
T loss_ce(std::span<const T> logits, std::size_t y) {
  check_label(y, logits.size());
  const T m = *std::max_element(logits.begin(), logits.end());
  T sum{0};
  for (T z : logits) sum += std::exp(z - m);
  return std::log(sum) - (logits[y] - m);
}

template <typename T>
T loss_cw(std::span<const T> logits, std::size_t y, T kappa) {
  check_label(y, logits.size());
  if (logits.size() < 2) throw ArgumentError("margin loss needs at least two classes");
  const T margin = logits[y] - logits[runner_up(logits, y)];
  return std::max(margin, -kappa);
}

template <typename T>
T loss_and_grad(LossKind kind, std::span<const T> logits, std::size_t y, T kappa, std::span<T> grad) {
  check_label(y, logits.size());
  if (kind == LossKind::ce) {
    const T m = *std::max_element(logits.begin(), logits.end());
    T sum{0};
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad[i] = std::exp(logits[i] - m);
      sum += grad[i];
    }
    for (T& g : grad) g /= sum;
    grad[y] -= T{1};
    return std::log(sum) - (logits[y] - m);
  }
  if (logits.size() < 2) throw ArgumentError("margin loss needs at least two classes");
  std::fill(grad.begin(), grad.end(), T{0});
  const std::size_t other = runner_up(logits, y);
  const T margin = logits[y] - logits[other];
  if (margin > -kappa) {
    grad[y] = T{1};
    grad[other] = T{-1};
    return margin;
  }
  return -kappa;
}

template <typename T>
struct Evaluator<T>::Impl {
  struct LayerState {
    std::vector<T> wt;   // conv: K x Co, dense: in x units
    std::vector<T> col;  // conv: K x P patches from the last forward
    std::vector<std::uint32_t> argmax;
    std::size_t param = 0;
  };

  const BasicModel<T>* model;
  std::vector<std::vector<T>> acts;
  std::vector<LayerState> layers;
  std::vector<T> grad_a, grad_b, dcol, dout_t, dw_t, dlogits;

  explicit Impl(const BasicModel<T>& m) : model(&m) {
    validate_params(m);
    const Architecture& arch = m.arch;
    const auto& specs = arch.layers();
    acts.resize(specs.size() + 1);
    acts[0].resize(arch.input().size());
    layers.resize(specs.size());
    std::size_t max_act = arch.input().size(), max_col = 0, max_w = 0;
    std::size_t param = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const Volume& in = arch.in_volume(i);
      const Volume& out = arch.out_volume(i);
      acts[i + 1].resize(out.size());
      max_act = std::max(max_act, out.size());
      LayerState& st = layers[i];
      switch (specs[i].kind) {
        case LayerKind::conv: {
          const std::size_t k = in.c * specs[i].kh * specs[i].kw;
          const std::size_t p = out.h * out.w;
          st.param = param++;
          st.wt.resize(k * out.c);
          kernels::transpose(out.c, k, m.params[st.param].weight.data().data(), st.wt.data());
          st.col.resize(k * p);
          max_col = std::max(max_col, k * p);
          max_w = std::max(max_w, std::max(k * out.c, p * out.c));
          break;
        }
        case LayerKind::dense:
        case LayerKind::output: {
          st.param = param++;
          st.wt.resize(in.size() * out.c);
          kernels::transpose(out.c, in.size(), m.params[st.param].weight.data().data(), st.wt.data());
          break;
        }
        case LayerKind::max_pool:
          st.argmax.resize(out.size());
          break;
        case LayerKind::relu:
          break;
      }
    }
    grad_a.resize(max_act);
    grad_b.resize(max_act);
    dcol.resize(max_col);
    dout_t.resize(max_w);
    dw_t.resize(max_w);
    dlogits.resize(arch.num_classes());
  }

  std::span<const T> forward(std::span<const T> x) {
    const Architecture& arch = model->arch;
    if (x.size() != arch.input().size()) {
      throw ShapeError("input has " + std::to_string(x.size()) + " values, architecture expects " +
                       shape_string(arch.input_shape()));
    }
    std::copy(x.begin(), x.end(), acts[0].begin());
    const auto& specs = arch.layers();
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const T* in = acts[i].data();
      T* out = acts[i + 1].data();
      const Volume& vin = arch.in_volume(i);
      const Volume& vout = arch.out_volume(i);
      LayerState& st = layers[i];
      switch (specs[i].kind) {
        case LayerKind::conv: {
          const auto& p = model->params[st.param];
          const std::size_t k = vin.c * specs[i].kh * specs[i].kw;
          const std::size_t pix = vout.h * vout.w;
          kernels::im2col(in, vin.c, vin.h, vin.w, specs[i].kh, specs[i].kw, st.col.data());
          kernels::gemm(vout.c, pix, k, p.weight.data().data(), k, st.col.data(), pix, out, pix);
          for (std::size_t co = 0; co < vout.c; ++co) {
            const T b = p.bias[co];
            for (std::size_t j = 0; j < pix; ++j) out[co * pix + j] += b;
          }
          break;
        }
        case LayerKind::dense:
        case LayerKind::output: {
          const auto& p = model->params[st.param];
          const std::size_t units = vout.c, n = vin.size();
          std::fill(out, out + units, T{0});
          for (std::size_t j = 0; j < n; ++j) {
            const T v = in[j];
            if (v == T{0}) continue;
            const T* w = st.wt.data() + j * units;
            for (std::size_t u = 0; u < units; ++u) out[u] += v * w[u];
          }
          for (std::size_t u = 0; u < units; ++u) out[u] += p.bias[u];
          break;
        }
        case LayerKind::relu:
          for (std::size_t j = 0; j < vout.size(); ++j) out[j] = in[j] > T{0} ? in[j] : T{0};
          break;
        case LayerKind::max_pool: {
          const std::size_t ph = specs[i].kh, pw = specs[i].kw;
          std::size_t o = 0;
          for (std::size_t c = 0; c < vout.c; ++c)
            for (std::size_t oy = 0; oy < vout.h; ++oy)
              for (std::size_t ox = 0; ox < vout.w; ++ox, ++o) {
                std::size_t best = (c * vin.h + oy * ph) * vin.w + ox * pw;
                for (std::size_t dy = 0; dy < ph; ++dy)
                  for (std::size_t dx = 0; dx < pw; ++dx) {
                    const std::size_t idx = (c * vin.h + oy * ph + dy) * vin.w + ox * pw + dx;
                    if (in[idx] > in[best]) best = idx;
                  }
                out[o] = in[best];
                st.argmax[o] = static_cast<std::uint32_t>(best);
              }
          break;
        }
      }
    }
    return acts.back();
  }

  // Propagates dlogits back to the input. grads may be null.
  void backward(std::span<T> input_grad, ParamGrads<T>* grads, T scale) {
    const Architecture& arch = model->arch;
    const auto& specs = arch.layers();
    std::vector<T>* g = &grad_a;
    std::vector<T>* dx = &grad_b;
    std::copy(dlogits.begin(), dlogits.end(), g->begin());
    for (std::size_t i = specs.size(); i-- > 0;) {
      const bool need_dx = i > 0 || !input_grad.empty();
      if (!need_dx && grads == nullptr) break;
      const T* in = acts[i].data();
      const Volume& vin = arch.in_volume(i);
      const Volume& vout = arch.out_volume(i);
      LayerState& st = layers[i];
      const T* gy = g->data();
      T* gx = dx->data();
      switch (specs[i].kind) {
        case LayerKind::conv: {
          const std::size_t k = vin.c * specs[i].kh * specs[i].kw;
          const std::size_t pix = vout.h * vout.w;
          const std::size_t co_n = vout.c;
          if (grads) {
            auto& pg = (*grads)[st.param];
            for (std::size_t co = 0; co < co_n; ++co) {
              T sum{0};
              for (std::size_t j = 0; j < pix; ++j) sum += gy[co * pix + j];
              pg.bias[co] += scale * sum;
            }
            kernels::transpose(co_n, pix, gy, dout_t.data());
            kernels::gemm(k, co_n, pix, st.col.data(), pix, dout_t.data(), co_n, dw_t.data(), co_n);
            T* w = pg.weight.data().data();
            for (std::size_t co = 0; co < co_n; ++co)
              for (std::size_t kk = 0; kk < k; ++kk) w[co * k + kk] += scale * dw_t[kk * co_n + co];
          }
          if (need_dx) {
            kernels::gemm(k, pix, co_n, st.wt.data(), co_n, gy, pix, dcol.data(), pix);
            kernels::col2im(dcol.data(), vin.c, vin.h, vin.w, specs[i].kh, specs[i].kw, gx);
          }
          break;
        }
        case LayerKind::dense:
        case LayerKind::output: {
          const auto& p = model->params[st.param];
          const std::size_t units = vout.c, n = vin.size();
          if (grads) {
            auto& pg = (*grads)[st.param];
            T* w = pg.weight.data().data();
            for (std::size_t u = 0; u < units; ++u) {
              const T s = scale * gy[u];
              pg.bias[u] += s;
              if (s == T{0}) continue;
              T* row = w + u * n;
              for (std::size_t j = 0; j < n; ++j) row[j] += s * in[j];
            }
          }
          if (need_dx) {
            std::fill(gx, gx + n, T{0});
            const T* w = p.weight.data().data();
            for (std::size_t u = 0; u < units; ++u) {
              const T s = gy[u];
              if (s == T{0}) continue;
              const T* row = w + u * n;
              for (std::size_t j = 0; j < n; ++j) gx[j] += s * row[j];
            }
          }
          break;
        }
        case LayerKind::relu: {
          const T* out = acts[i + 1].data();
          for (std::size_t j = 0; j < vin.size(); ++j) gx[j] = out[j] > T{0} ? gy[j] : T{0};
          break;
        }
        case LayerKind::max_pool: {
          std::fill(gx, gx + vin.size(), T{0});
          for (std::size_t o = 0; o < vout.size(); ++o) gx[st.argmax[o]] += gy[o];
          break;
        }
      }
      std::swap(g, dx);
    }
    if (!input_grad.empty()) std::copy(g->begin(), g->begin() + static_cast<std::ptrdiff_t>(input_grad.size()),
                                       input_grad.begin());
  }
};

template <typename T>
Evaluator<T>::Evaluator(const BasicModel<T>& model) : impl_(std::make_unique<Impl>(model)) {}

template <typename T>
Evaluator<T>::~Evaluator() = default;

template <typename T>
Evaluator<T>::Evaluator(Evaluator&&) noexcept = default;

template <typename T>
Evaluator<T>& Evaluator<T>::operator=(Evaluator&&) noexcept = default;

template <typename T>
const BasicModel<T>& Evaluator<T>::model() const {
  return *impl_->model;
}

template <typename T>
std::span<const T> Evaluator<T>::forward(std::span<const T> x) {
  return impl_->forward(x);
}

template <typename T>
T Evaluator<T>::loss_gradient(std::span<const T> x, std::size_t y, LossKind kind, T kappa, std::span<T> input_grad,
                              ParamGrads<T>* param_grads, T scale) {
  if (!input_grad.empty() && input_grad.size() != x.size()) {
    throw ShapeError("input gradient buffer has " + std::to_string(input_grad.size()) + " values, input has " +
                     std::to_string(x.size()));
  }
  const auto logits = impl_->forward(x);
  const T loss = loss_and_grad<T>(kind, logits, y, kappa, impl_->dlogits);
  impl_->backward(input_grad, param_grads, scale);
  return loss;
}

template <typename T>
std::vector<std::uint32_t> Evaluator<T>::activation_pattern() const {
  std::vector<std::uint32_t> pattern;
  const auto& specs = impl_->model->arch.layers();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == LayerKind::relu) {
      const auto& out = impl_->acts[i + 1];
      std::uint32_t word = 0;
      for (std::size_t j = 0; j < out.size(); ++j) {
        if (out[j] > T{0}) word |= 1U << (j % 32);
        if (j % 32 == 31 || j + 1 == out.size()) {
          pattern.push_back(word);
          word = 0;
        }
      }
    } else if (specs[i].kind == LayerKind::max_pool) {
      pattern.insert(pattern.end(), impl_->layers[i].argmax.begin(), impl_->layers[i].argmax.end());
    }
  }
  return pattern;
}

namespace {

template <typename T>
BasicTensor<T> forward_impl(const BasicModel<T>& model, const BasicTensor<T>& x) {
  if (x.shape() != model.arch.input_shape()) {
    throw ShapeError("input shape " + shape_string(x.shape()) + " does not match architecture input " +
                     shape_string(model.arch.input_shape()));
  }
  Evaluator<T> ev(model);
  const auto logits = ev.forward(x.data());
  return BasicTensor<T>({logits.size()}, std::vector<T>(logits.begin(), logits.end()));
}

}  // namespace

Tensor forward(const Model& model, const Tensor& x) { return forward_impl(model, x); }
TensorD forward(const ModelD& model, const TensorD& x) { return forward_impl(model, x); }

template <typename T>
BasicTensor<T> input_gradient(const BasicModel<T>& model, const BasicTensor<T>& x, std::size_t y, LossKind kind,
                              T kappa) {
  if (x.shape() != model.arch.input_shape()) {
    throw ShapeError("input shape " + shape_string(x.shape()) + " does not match architecture input " +
                     shape_string(model.arch.input_shape()));
  }
  Evaluator<T> ev(model);
  BasicTensor<T> grad(x.shape());
  ev.loss_gradient(x.data(), y, kind, kappa, grad.data());
  return grad;
}

template <typename T>
ParamGrads<T> param_gradients(const BasicModel<T>& model, const BasicBatch<T>& batch, LossKind kind, T kappa) {
  if (batch.images.empty()) throw ArgumentError("param_gradients needs a nonempty batch");
  if (batch.images.size() != batch.labels.size()) throw ArgumentError("batch image and label counts differ");
  Evaluator<T> ev(model);
  ParamGrads<T> grads = zero_grads<T>(model.arch);
  const T scale = T{1} / static_cast<T>(batch.images.size());
  for (std::size_t i = 0; i < batch.images.size(); ++i) {
    if (batch.images[i].shape() != model.arch.input_shape()) {
      throw ShapeError("batch image " + std::to_string(i) + " has shape " + shape_string(batch.images[i].shape()));
    }
    ev.loss_gradient(batch.images[i].data(), batch.labels[i], kind, kappa, {}, &grads, scale);
  }
  return grads;
}

template <typename T>
std::size_t predict_class(const BasicModel<T>& model, const BasicTensor<T>& x) {
  Evaluator<T> ev(model);
  return argmax<T>(ev.forward(x.data()));
}

#define ADVMS_INSTANTIATE(T)                                                                                  \
  template std::size_t argmax<T>(std::span<const T>);                                                         \
  template T loss_ce<T>(std::span<const T>, std::size_t);                                                     \
  template T loss_cw<T>(std::span<const T>, std::size_t, T);                                                  \
  template T loss_and_grad<T>(LossKind, std::span<const T>, std::size_t, T, std::span<T>);                    \
  template class Evaluator<T>;                                                                                \
  template BasicTensor<T> input_gradient<T>(const BasicModel<T>&, const BasicTensor<T>&, std::size_t, LossKind, \
                                            T);                                                               \
  template ParamGrads<T> param_gradients<T>(const BasicModel<T>&, const BasicBatch<T>&, LossKind, T);         \
  template std::size_t predict_class<T>(const BasicModel<T>&, const BasicTensor<T>&);

ADVMS_INSTANTIATE(float)
ADVMS_INSTANTIATE(double)

#undef ADVMS_INSTANTIATE

}  // namespace advms

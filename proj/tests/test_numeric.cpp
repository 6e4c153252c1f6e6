#include <doctest.h>

#include <cmath>
#include <vector>

#include "advms/architecture.hpp"
#include "advms/error.hpp"
#include "advms/grad_check.hpp"
#include "advms/model.hpp"
#include "advms/network.hpp"
#include "support.hpp"

using namespace advms;
using advms::testing::random_image;
using advms::testing::tiny_arch;

namespace {

// Direct-loop reference forward pass in double, independent of the
// im2col/GEMM path.
std::vector<double> reference_forward(const Model& model, const Tensor& x) {
  const auto& arch = model.arch;
  std::vector<double> a(x.data().begin(), x.data().end());
  Volume v = arch.input();
  std::size_t p = 0;
  for (const auto& layer : arch.layers()) {
    switch (layer.kind) {
      case LayerKind::conv: {
        const auto& w = model.params[p].weight;
        const auto& b = model.params[p].bias;
        ++p;
        const Volume out{layer.size, v.h - layer.kh + 1, v.w - layer.kw + 1};
        std::vector<double> o(out.size());
        for (std::size_t f = 0; f < out.c; ++f)
          for (std::size_t i = 0; i < out.h; ++i)
            for (std::size_t j = 0; j < out.w; ++j) {
              double s = b[f];
              for (std::size_t c = 0; c < v.c; ++c)
                for (std::size_t di = 0; di < layer.kh; ++di)
                  for (std::size_t dj = 0; dj < layer.kw; ++dj)
                    s += w[((f * v.c + c) * layer.kh + di) * layer.kw + dj] * a[(c * v.h + i + di) * v.w + j + dj];
              o[(f * out.h + i) * out.w + j] = s;
            }
        a = std::move(o);
        v = out;
        break;
      }
      case LayerKind::relu:
        for (auto& e : a) e = std::max(e, 0.0);
        break;
      case LayerKind::max_pool: {
        const Volume out{v.c, v.h / layer.kh, v.w / layer.kw};
        std::vector<double> o(out.size());
        for (std::size_t c = 0; c < v.c; ++c)
          for (std::size_t i = 0; i < out.h; ++i)
            for (std::size_t j = 0; j < out.w; ++j) {
              double m = -INFINITY;
              for (std::size_t di = 0; di < layer.kh; ++di)
                for (std::size_t dj = 0; dj < layer.kw; ++dj)
                  m = std::max(m, a[(c * v.h + i * layer.kh + di) * v.w + j * layer.kw + dj]);
              o[(c * out.h + i) * out.w + j] = m;
            }
        a = std::move(o);
        v = out;
        break;
      }
      case LayerKind::dense:
      case LayerKind::output: {
        const auto& w = model.params[p].weight;
        const auto& b = model.params[p].bias;
        ++p;
        std::vector<double> o(layer.size);
        for (std::size_t u = 0; u < layer.size; ++u) {
          double s = b[u];
          for (std::size_t k = 0; k < a.size(); ++k) s += w[u * a.size() + k] * a[k];
          o[u] = s;
        }
        a = std::move(o);
        v = {layer.size, 1, 1};
        break;
      }
    }
  }
  return a;
}

Model with_zero_output(Model m) {
  for (auto& w : m.params.back().weight.data()) w = 0.0f;
  return m;
}

}  // namespace

TEST_CASE("cross-entropy values") {
  const std::vector<double> uniform(10, 0.7);
  for (std::size_t y = 0; y < 10; ++y) CHECK(loss_ce<double>(uniform, y) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  const std::vector<double> saturated{0.0, 1000.0, 0.0};
  CHECK(loss_ce<double>(saturated, 1) <= 1e-6);

  const std::vector<double> l{1.0, 2.0, 3.0};
  CHECK(loss_ce<double>(l, 0) == doctest::Approx(2.40760596444438).epsilon(1e-12));

  double total = 0.0;
  const std::vector<double> r{0.3, -1.2, 4.5, 2.2};
  for (std::size_t y = 0; y < r.size(); ++y) total += std::exp(-loss_ce<double>(r, y));
  CHECK(std::abs(total - 1.0) < 1e-9);

  CHECK_THROWS_AS(loss_ce<double>(l, 3), IndexError);
}

TEST_CASE("margin loss values") {
  const std::vector<double> a{5.0, 1.0}, b{1.0, 5.0};
  CHECK(loss_cw<double>(a, 0, 0.0) == 4.0);
  CHECK(loss_cw<double>(b, 0, 0.0) == 0.0);
  CHECK(loss_cw<double>(b, 0, 2.0) == -2.0);
  CHECK_THROWS_AS(loss_cw<double>(a, 2, 0.0), IndexError);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  const std::vector<float> l{1.0f, 3.0f, 3.0f, 2.0f};
  CHECK(argmax<float>(l) == 1);
  const std::vector<float> flat(5, 0.0f);
  CHECK(argmax<float>(flat) == 0);
}

TEST_CASE("built-in architectures") {
  const Architecture mnist = build_architecture(DatasetId::mnist);
  const std::vector<LayerSpec> expected{LayerSpec::conv(32, 3, 3), LayerSpec::conv(32, 3, 3), LayerSpec::max_pool(2, 2),
                                        LayerSpec::conv(64, 3, 3), LayerSpec::conv(64, 3, 3), LayerSpec::max_pool(2, 2),
                                        LayerSpec::dense(200),     LayerSpec::dense(200),     LayerSpec::output(10)};
  CHECK(mnist.trunk() == expected);
  CHECK(mnist.num_classes() == 10);
  // Per-layer hand count: weights + biases.
  const std::size_t mnist_params = (32 * 1 * 9 + 32) + (32 * 32 * 9 + 32) + (64 * 32 * 9 + 64) + (64 * 64 * 9 + 64) +
                                   (1024 * 200 + 200) + (200 * 200 + 200) + (200 * 10 + 10);
  CHECK(mnist.parameter_count() == mnist_params);
  CHECK(mnist_params == 312202);

  const Architecture cifar = build_architecture("cifar10");
  const std::vector<LayerSpec> cifar_expected{
      LayerSpec::conv(64, 3, 3),  LayerSpec::conv(64, 3, 3),  LayerSpec::max_pool(2, 2),
      LayerSpec::conv(128, 3, 3), LayerSpec::conv(128, 3, 3), LayerSpec::max_pool(2, 2),
      LayerSpec::dense(256),      LayerSpec::dense(256),      LayerSpec::output(10)};
  CHECK(cifar.trunk() == cifar_expected);
  CHECK(cifar.parameter_count() == (64 * 3 * 9 + 64) + (64 * 64 * 9 + 64) + (128 * 64 * 9 + 128) +
                                       (128 * 128 * 9 + 128) + (3200 * 256 + 256) + (256 * 256 + 256) +
                                       (256 * 10 + 10));

  const Architecture syn = build_architecture(DatasetId::synthetic);
  CHECK(syn.trunk() == std::vector<LayerSpec>{LayerSpec::conv(8, 3, 3), LayerSpec::max_pool(2, 2),
                                              LayerSpec::dense(32), LayerSpec::output(4)});

  CHECK_THROWS_AS(build_architecture("imagenet"), ConfigError);
  CHECK_THROWS_AS(Architecture(DatasetId::synthetic, {1, 2, 2}, {LayerSpec::conv(1, 3, 3), LayerSpec::output(2)}),
                  ShapeError);
  CHECK_THROWS_AS(Architecture(DatasetId::synthetic, {1, 4, 4}, {LayerSpec::dense(3)}), ShapeError);
}

TEST_CASE("init_params") {
  const Architecture arch = build_architecture(DatasetId::mnist);
  const Model a = init_params(arch, 1), b = init_params(arch, 1), c = init_params(arch, 2);
  CHECK(a.params == b.params);
  CHECK(a.flatten() != c.flatten());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    for (float v : a.params[i].bias.data()) CHECK(v == 0.0f);
    const auto& w = a.params[i].weight;
    const double bound = std::sqrt(6.0 / static_cast<double>(w.size() / w.dim(0)));
    for (float v : w.data()) REQUIRE(std::abs(v) <= bound);
  }
  CHECK(a.parameter_count() == arch.parameter_count());
}

TEST_CASE("forward on hand-built layers") {
  SUBCASE("identity dense") {
    Model m = init_params(Architecture(DatasetId::synthetic, {3, 1, 1}, {LayerSpec::output(3)}), 0);
    auto& w = m.params[0].weight;
    for (std::size_t i = 0; i < 9; ++i) w[i] = (i % 4 == 0) ? 1.0f : 0.0f;
    const Tensor x({3, 1, 1}, {0.25f, 0.5f, 0.75f});
    CHECK(forward(m, x).values() == x.values());
  }
  SUBCASE("1x1 identity kernel") {
    Model m = init_params(
        Architecture(DatasetId::synthetic, {1, 3, 3}, {LayerSpec::conv(1, 1, 1), LayerSpec::output(9)}), 0);
    m.params[0].weight[0] = 1.0f;
    auto& w = m.params[1].weight;
    for (std::size_t i = 0; i < 81; ++i) w[i] = (i % 10 == 0) ? 1.0f : 0.0f;
    const Tensor x = random_image({1, 3, 3}, 4);
    CHECK(forward(m, x).values() == x.values());
  }
  SUBCASE("2x2 kernel on 2x2 input") {
    Model m = init_params(
        Architecture(DatasetId::synthetic, {1, 2, 2}, {LayerSpec::conv(1, 2, 2), LayerSpec::output(1)}), 0);
    m.params[0].weight = Tensor({1, 1, 2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    m.params[1].weight[0] = 1.0f;
    CHECK(forward(m, Tensor({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}))[0] == 5.0f);
  }
}

TEST_CASE("forward matches a direct-loop reference") {
  for (DatasetId id : {DatasetId::synthetic, DatasetId::mnist}) {
    const Architecture arch = build_architecture(id);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Model m = init_params(arch, seed);
      const Tensor x = random_image(arch.input_shape(), seed + 10);
      const Tensor got = forward(m, x);
      const auto want = reference_forward(m, x);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-4));
      CHECK(forward(m, x) == got);
    }
  }
}

TEST_CASE("forward rejects a wrong input shape") {
  const Model m = init_params(tiny_arch(), 0);
  CHECK_THROWS_AS(forward(m, Tensor({1, 9, 9})), ShapeError);
  CHECK_THROWS_AS(input_gradient(m, Tensor({2, 8, 8}), 0, LossKind::ce), ShapeError);
}

TEST_CASE("post-ReLU activations are nonnegative") {
  // A model ending in an identity output layer exposes the last hidden layer.
  Architecture arch(DatasetId::synthetic, {1, 6, 6},
                    {LayerSpec::conv(4, 3, 3), LayerSpec::relu(), LayerSpec::dense(16), LayerSpec::relu(),
                     LayerSpec::output(16)});
  Model m = init_params(arch, 3);
  auto& w = m.params.back().weight;
  for (std::size_t i = 0; i < 256; ++i) w[i] = (i % 17 == 0) ? 1.0f : 0.0f;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor out = forward(m, random_image({1, 6, 6}, s));
    for (float v : out.data()) CHECK(v >= 0.0f);
  }
}

TEST_CASE("input gradient closed forms") {
  SUBCASE("constant logits give a zero gradient") {
    const Model m = with_zero_output(init_params(tiny_arch(), 5));
    const Tensor g = input_gradient(m, random_image({1, 8, 8}, 1), 1, LossKind::ce);
    for (float v : g.data()) CHECK(v == 0.0f);
    const auto r = grad_check(m, random_image({1, 8, 8}, 1), 1, LossKind::ce);
    CHECK(r.input_error == 0.0);
  }
  SUBCASE("linear softmax model") {
    const Architecture arch(DatasetId::synthetic, {1, 2, 2}, {LayerSpec::output(3)});
    const ModelD m = init_params(arch, 9).cast<double>();
    const TensorD x = random_image({1, 2, 2}, 2).cast<double>();
    const std::size_t y = 2;
    const auto& W = m.params[0].weight;
    std::vector<double> z(3), p(3);
    for (std::size_t u = 0; u < 3; ++u) {
      for (std::size_t k = 0; k < 4; ++k) z[u] += W[u * 4 + k] * x[k];
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t u = 0; u < 3; ++u) sum += p[u] = std::exp(z[u] - mx);
    for (auto& v : p) v /= sum;
    p[y] -= 1.0;
    const TensorD g = input_gradient<double>(m, x, y, LossKind::ce);
    for (std::size_t k = 0; k < 4; ++k) {
      double want = 0.0;
      for (std::size_t u = 0; u < 3; ++u) want += W[u * 4 + k] * p[u];
      CHECK(g[k] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("param_gradients") {
  const Model m = init_params(tiny_arch(), 7);
  const Tensor x = random_image({1, 8, 8}, 3);
  const Batch one{{x}, {1}};
  const Batch two{{x, x}, {1, 1}};
  const auto g1 = param_gradients(m, one, LossKind::ce);
  CHECK(param_gradients(m, two, LossKind::ce) == g1);

  Evaluator<float> ev(m);
  auto direct = zero_grads<float>(m.arch);
  ev.loss_gradient(x.data(), 1, LossKind::ce, 0.0f, {}, &direct);
  CHECK(direct == g1);

  CHECK_THROWS_AS(param_gradients(m, Batch{}, LossKind::ce), ArgumentError);
}

TEST_CASE("gradient check") {
  SUBCASE("synthetic architecture, both losses") {
    const Architecture arch = build_architecture(DatasetId::synthetic);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Model m = init_params(arch, s);
      const Tensor x = random_image(arch.input_shape(), s);
      const auto ce = grad_check(m, x, s % 4, LossKind::ce, {.seed = s});
      CHECK(ce.max_rel_error < 1e-5);
      CHECK(ce.checks > 0);
      GradCheckOptions opts;
      opts.kappa = 1e6;  // margin never clamps
      opts.seed = s;
      CHECK(grad_check(m, x, s % 4, LossKind::cw, opts).max_rel_error < 1e-5);
    }
  }
  SUBCASE("mnist architecture at two step sizes") {
    const Architecture arch = build_architecture(DatasetId::mnist);
    const Model m = init_params(arch, 11);
    const Tensor x = random_image(arch.input_shape(), 11);
    GradCheckOptions opts;
    CHECK(grad_check(m, x, 3, LossKind::ce, opts).max_rel_error < 1e-5);
    opts.step = 1e-6;
    CHECK(grad_check(m, x, 3, LossKind::ce, opts).max_rel_error < 1e-5);
  }
}

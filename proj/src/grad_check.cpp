#include "advms/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "advms/error.hpp"
#include "advms/rng.hpp"

namespace advms {
namespace {

using Pattern = std::vector<std::uint32_t>;

struct Probe {
  double loss;
  Pattern pattern;
};

/// Loss plus the full piecewise regime: network kinks and, for the margin
/// loss, which class is runner-up and whether the clamp is active.
Probe probe(const ModelD& model, std::span<const double> x, std::size_t y, LossKind kind, double kappa) {
  Evaluator<double> ev(model);
  const auto logits = ev.forward(x);
  Probe p{kind == LossKind::ce ? loss_ce<double>(logits, y) : loss_cw<double>(logits, y, kappa),
          ev.activation_pattern()};
  if (kind == LossKind::cw) {
    std::size_t other = y == 0 ? 1 : 0;
    for (std::size_t i = 0; i < logits.size(); ++i)
      if (i != y && logits[i] > logits[other]) other = i;
    p.pattern.push_back(static_cast<std::uint32_t>(other));
    p.pattern.push_back(logits[y] - logits[other] > -kappa ? 1U : 0U);
  }
  return p;
}

double rel_error(double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// A direction over one flat buffer: (index, sign) pairs.
using Direction = std::vector<std::pair<std::size_t, double>>;

class Checker {
 public:
  Checker(const ModelD& model, const TensorD& x, std::size_t y, LossKind kind, const GradCheckOptions& opt)
      : model_(model), x_(x.values()), y_(y), kind_(kind), opt_(opt),
        base_(probe(model, x_, y, kind, opt.kappa)), rng_(derive_stream(opt.seed, "grad_check")) {}

  /// Draws probes over a buffer of n values and records the worst error.
  /// `apply(dir, sign)` perturbs the buffer, evaluates and restores it.
  template <typename Eval>
  double run(std::span<const double> analytic, std::size_t coords, Eval&& eval) {
    const std::size_t n = analytic.size();
    double worst = 0.0;
    auto check = [&](const Direction& dir) {
      const Probe plus = eval(dir, opt_.step);
      const Probe minus = eval(dir, -opt_.step);
      if (plus.pattern != base_.pattern || minus.pattern != base_.pattern) {
        ++result.skipped;
        return;
      }
      double a = 0.0;
      for (const auto& [i, s] : dir) a += s * analytic[i];
      const double numeric = (plus.loss - minus.loss) / (2.0 * opt_.step);
      worst = std::max(worst, rel_error(a, numeric, opt_.floor));
      ++result.checks;
    };
    for (std::size_t c = 0; c < std::min(coords, n); ++c) check({{uniform_index(rng_, n), 1.0}});
    for (std::size_t d = 0; d < opt_.directions; ++d) {
      Direction dir;
      for (std::size_t k = 0; k < std::min(opt_.direction_support, n); ++k) {
        dir.emplace_back(uniform_index(rng_, n), (rng_() & 1) ? 1.0 : -1.0);
      }
      std::sort(dir.begin(), dir.end());
      dir.erase(std::unique(dir.begin(), dir.end(),
                            [](const auto& l, const auto& r) { return l.first == r.first; }),
                dir.end());
      check(dir);
    }
    return worst;
  }

  GradCheckResult check_all() {
    Evaluator<double> ev(model_);
    std::vector<double> input_grad(x_.size());
    ParamGrads<double> grads = zero_grads<double>(model_.arch);
    ev.loss_gradient(x_, y_, kind_, opt_.kappa, input_grad, &grads);

    std::vector<double> xs = x_;
    result.input_error = run(input_grad, opt_.input_coords, [&](const Direction& dir, double h) {
      for (const auto& [i, s] : dir) xs[i] = x_[i] + s * h;
      Probe p = probe(model_, xs, y_, kind_, opt_.kappa);
      for (const auto& [i, s] : dir) xs[i] = x_[i];
      return p;
    });

    ModelD work = model_;
    for (std::size_t layer = 0; layer < work.params.size(); ++layer) {
      for (int which = 0; which < 2; ++which) {
        auto& tensor = which == 0 ? work.params[layer].weight : work.params[layer].bias;
        const auto& original = which == 0 ? model_.params[layer].weight : model_.params[layer].bias;
        const auto& analytic = which == 0 ? grads[layer].weight : grads[layer].bias;
        const double err = run(analytic.data(), opt_.param_coords, [&](const Direction& dir, double h) {
          for (const auto& [i, s] : dir) tensor[i] = original[i] + s * h;
          Probe p = probe(work, x_, y_, kind_, opt_.kappa);
          for (const auto& [i, s] : dir) tensor[i] = original[i];
          return p;
        });
        result.param_error = std::max(result.param_error, err);
      }
    }
    result.max_rel_error = std::max(result.input_error, result.param_error);
    return result;
  }

  GradCheckResult result;

 private:
  const ModelD& model_;
  std::vector<double> x_;
  std::size_t y_;
  LossKind kind_;
  GradCheckOptions opt_;
  Probe base_;
  Rng rng_;
};

}  // namespace

GradCheckResult grad_check(const ModelD& model, const TensorD& x, std::size_t y, LossKind kind,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ArgumentError("grad_check step must be positive");
  if (x.shape() != model.arch.input_shape()) {
    throw ShapeError("grad_check input shape " + shape_string(x.shape()) + " does not match " +
                     shape_string(model.arch.input_shape()));
  }
  Checker checker(model, x, y, kind, options);
  return checker.check_all();
}

}  // namespace advms

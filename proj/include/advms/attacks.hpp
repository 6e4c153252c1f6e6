#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "advms/dataset.hpp"
#include "advms/model.hpp"
#include "advms/network.hpp"
#include "advms/rng.hpp"

namespace advms {

enum class AttackKind { fgsm, pgd, cw_pgd };

/// How an attack sees a switching pool: `white_box` runs the whole attack
/// against one uniformly drawn member (a snapshot of the randomized
/// system); `eot` averages input gradients over fresh member draws at
/// every step.
enum class Threat { white_box, eot };

std::string_view to_string(AttackKind kind);
std::string_view to_string(Threat threat);
AttackKind parse_attack_kind(std::string_view name);
Threat parse_threat(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::pgd;
  double epsilon = 0.0;
  double step_size = 0.0;
  std::size_t steps = 1;
  bool random_start = false;
  double kappa = 0.0;
  Threat threat = Threat::white_box;
  std::size_t eot_samples = 1;
  std::uint64_t seed = 0;

  LossKind loss() const { return kind == AttackKind::cw_pgd ? LossKind::cw : LossKind::ce; }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

AttackConfig fgsm_config(double epsilon);
/// T = 40, step 2.5 * epsilon / T, random start.
AttackConfig pgd_config(double epsilon, std::size_t steps = 40);
/// pgd_config on the margin loss with kappa = 0.
AttackConfig cw_pgd_config(double epsilon, std::size_t steps = 40);

/// Throws ArgumentError when the config breaks an invariant (fgsm must be
/// one full-size step without random start; step_size <= epsilon; ...).
void validate(const AttackConfig& config);

/// Source of input gradients for an attack. Implementations hold scratch
/// state; use one oracle per thread.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;
  virtual const Shape& input_shape() const = 0;
  /// Writes d loss / d x into `out` (same size as x).
  virtual void gradient(std::span<const float> x, std::size_t y, LossKind kind, float kappa, std::span<float> out,
                        Rng& rng) = 0;
};

/// White-box gradients of a single model.
class ModelOracle final : public GradientOracle {
 public:
  explicit ModelOracle(const Model& model);
  const Shape& input_shape() const override { return shape_; }
  void gradient(std::span<const float> x, std::size_t y, LossKind kind, float kappa, std::span<float> out,
                Rng& rng) override;
  Evaluator<float>& evaluator() { return eval_; }

 private:
  Evaluator<float> eval_;
  Shape shape_;
};

/// Expectation-over-transformation gradients of a switching pool: the mean
/// input gradient over `samples` uniform member draws (with replacement),
/// or over every member once in exact mode. Draws that pick the same member
/// share one gradient evaluation, weighted by their count.
class EotOracle final : public GradientOracle {
 public:
  EotOracle(std::span<const Model> members, std::size_t samples, bool exact = false);
  const Shape& input_shape() const override { return shape_; }
  void gradient(std::span<const float> x, std::size_t y, LossKind kind, float kappa, std::span<float> out,
                Rng& rng) override;

 private:
  std::vector<Evaluator<float>> evals_;
  std::size_t samples_;
  bool exact_;
  Shape shape_;
  std::vector<float> scratch_;
  std::vector<std::size_t> counts_;
};

/// Tracks the L-infinity ball and [0, 1] box constraints over attack iterates.
struct ConstraintAudit {
  double tolerance = 1e-6;
  std::size_t iterates = 0;
  std::size_t violations = 0;
  double max_perturbation = 0.0;
  double min_value = 1.0;
  double max_value = 0.0;

  void observe(std::span<const float> x, std::span<const float> x_adv, double epsilon);
  void merge(const ConstraintAudit& other);
};

/// sign with sign(0) = 0.
inline float sign_of(float g) { return static_cast<float>((g > 0.0f) - (g < 0.0f)); }

/// x + eps * sign(grad of cross-entropy), clipped to [0, 1].
Tensor fgsm(GradientOracle& oracle, const Tensor& x, std::size_t y, double epsilon, Rng& rng);
Tensor fgsm(GradientOracle& oracle, const Tensor& x, std::size_t y, double epsilon);

/// Sign-gradient ascent on cross-entropy (pgd) or descent on the margin
/// loss (cw_pgd), projected onto the epsilon ball around x and the [0, 1]
/// box after every step. Random start draws Uniform(-eps, eps) per pixel.
Tensor pgd(GradientOracle& oracle, const Tensor& x, std::size_t y, const AttackConfig& config, Rng& rng,
           ConstraintAudit* audit = nullptr);

/// Dispatches on config.kind.
Tensor run_attack(GradientOracle& oracle, const Tensor& x, std::size_t y, const AttackConfig& config, Rng& rng,
                  ConstraintAudit* audit = nullptr);

/// Input-gradient average over n uniform member draws; exact mode averages
/// over all members once.
Tensor eot_gradient(std::span<const Model> members, const Tensor& x, std::size_t y, std::size_t n, LossKind kind,
                    Rng& rng, bool exact = false, float kappa = 0.0f);

/// Per-example random stream of an attack, keyed by example id.
Rng attack_stream(std::uint64_t attack_seed, std::uint64_t example_id);
/// Member a snapshot white-box attack targets for this example.
std::size_t snapshot_member(std::uint64_t attack_seed, std::uint64_t example_id, std::size_t pool_size);

struct AttackBatchResult {
  Tensor adversarial;                  ///< same shape as the input images
  std::vector<std::size_t> targets;    ///< snapshot member per example (0 for eot)
  ConstraintAudit audit;
};

/// Attacks every example of `slice` against the pool `members` according to
/// config.threat. Order-preserving; randomness keys on example ids, so the
/// result for an example does not depend on its position or on `workers`.
AttackBatchResult attack_batch(std::span<const Model> members, const Dataset& slice, const AttackConfig& config,
                               std::size_t workers = 1);

/// Flat dump of an image batch: u32 LE rank, u32 LE dims, f32 LE values.
void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace advms

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "advms/architecture.hpp"
#include "advms/attacks.hpp"
#include "advms/dataset.hpp"
#include "advms/ini.hpp"
#include "advms/model.hpp"

namespace advms {

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double epsilon_train = 0.0;
  std::size_t inner_steps = 7;
  /// 0 selects 2.5 * epsilon_train / inner_steps.
  double inner_step_size = 0.0;
  std::uint64_t seed = 0;

  double effective_inner_step() const;
  /// Hash of every field except the seed.
  std::uint64_t fingerprint() const;
  void to_section(IniSection& section) const;
};

void validate(const TrainConfig& config);

/// Optional per-run diagnostics.
struct TrainLog {
  /// Mean loss over each epoch's (possibly adversarial) training inputs.
  std::vector<double> epoch_loss;
  /// When set, also records per-batch mean clean loss next to the mean
  /// loss on the inner-maximized batch, both at the same parameters.
  bool record_batch_losses = false;
  std::vector<double> clean_batch_loss;
  std::vector<double> adversarial_batch_loss;
  /// Every inner-maximization iterate.
  ConstraintAudit audit;
};

/// Momentum SGD on cross-entropy from init_params(arch, config.seed).
/// Requires config.epsilon_train == 0.
Model train_standard(const Architecture& arch, const Dataset& data, const TrainConfig& config,
                     TrainLog* log = nullptr);

/// Each step replaces the clean batch by PGD examples (inner_steps sign
/// steps, random start, L-infinity budget epsilon_train) generated against
/// the current parameters, then takes a gradient step on them. With
/// epsilon_train = 0 the inner loop is skipped entirely and the result is
/// bit-identical to train_standard.
Model train_adversarial(const Architecture& arch, const Dataset& data, const TrainConfig& config,
                        TrainLog* log = nullptr);

/// Fraction of `data` the model classifies correctly.
double accuracy(const Model& model, const Dataset& data);

/// Directory of trained checkpoints keyed by (architecture, training data,
/// epsilon_train, member seed, training config).
class CheckpointCache {
 public:
  explicit CheckpointCache(std::filesystem::path dir);

  static std::uint64_t key(const Architecture& arch, std::uint64_t dataset_fingerprint, const TrainConfig& config);
  std::filesystem::path path_for(std::uint64_t key) const;

  /// Loads the cached checkpoint or trains (train_adversarial) and stores it.
  Model get_or_train(const Architecture& arch, const Dataset& data, std::uint64_t dataset_fingerprint,
                     const TrainConfig& config, bool* hit = nullptr);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace advms

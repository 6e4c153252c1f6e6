#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "advms/dataset.hpp"
#include "advms/model.hpp"
#include "advms/rng.hpp"
#include "advms/tensor.hpp"
#include "advms/training.hpp"

namespace advms {

/// Seed of pool member `index` (1-based).
std::uint64_t member_seed(std::uint64_t master_seed, std::size_t index);

/// M sub-models of one architecture, all trained with the same
/// epsilon_train from distinct initializations. One member is activated
/// uniformly at random per inference.
class SwitchingPool {
 public:
  /// Validates homogeneity: same architecture and train_epsilon for every
  /// member, pairwise distinct init seeds, at least one member.
  SwitchingPool(std::vector<Model> models, std::uint64_t master_seed);

  std::size_t size() const { return models_.size(); }
  std::span<const Model> members() const { return models_; }
  const Model& member(std::size_t i) const { return models_.at(i); }
  const Architecture& arch() const { return models_.front().arch; }
  double epsilon_train() const { return models_.front().train_epsilon; }
  std::uint64_t master_seed() const { return master_seed_; }

  /// Pool of the first m members; member seeds are index-derived, so this is
  /// the pool build_pool would produce with M = m.
  SwitchingPool prefix(std::size_t m) const;

 private:
  std::vector<Model> models_;
  std::uint64_t master_seed_;
};

struct BuildOptions {
  std::size_t workers = 1;
  CheckpointCache* cache = nullptr;
  /// Called after each member is ready (member index, cache hit).
  std::function<void(std::size_t, const Model&, bool)> on_member;
};

/// Trains members i = 1..M with train_adversarial and seed
/// member_seed(master_seed, i); every other training setting is shared.
SwitchingPool build_pool(const Architecture& arch, const Dataset& data, std::size_t m, const TrainConfig& config,
                         std::uint64_t master_seed, const BuildOptions& options = {});

/// Uniform member index in [0, M); consumes draws only from `rng`.
std::size_t activate(const SwitchingPool& pool, Rng& rng);

/// argmax (lowest index on ties) of a freshly activated member's logits.
std::size_t predict(const SwitchingPool& pool, const Tensor& x, Rng& rng);

/// M x (parameters per member) x 4 bytes.
std::uint64_t pool_memory_bytes(const SwitchingPool& pool);

/// eot_gradient over the pool's members.
Tensor eot_gradient(const SwitchingPool& pool, const Tensor& x, std::size_t y, std::size_t n, LossKind kind,
                    Rng& rng, bool exact = false);

/// Text manifest: architecture, M, epsilon_train, master_seed and the member
/// checkpoint paths (relative to the manifest's directory when possible).
void save_pool_manifest(const SwitchingPool& pool, const std::filesystem::path& manifest,
                        std::span<const std::filesystem::path> member_paths);
SwitchingPool load_pool_manifest(const std::filesystem::path& manifest);

}  // namespace advms

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advms/attacks.hpp"
#include "advms/dataset.hpp"
#include "advms/switching.hpp"
#include "advms/training.hpp"

namespace advms {

/// Eligible examples are those every member classifies correctly on clean
/// input. An eligible example scores the fraction of members that
/// misclassify its adversarial version; ASR is the mean score.
struct EvalProtocol {
  /// Number of test examples to use; 0 means the whole dataset. A smaller
  /// count draws a seeded subset.
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct ExampleRecord {
  std::uint64_t id = 0;
  std::size_t label = 0;
  std::size_t target_member = 0;  ///< snapshot member; 0 under eot
  std::size_t members_fooled = 0;
  double score = 0.0;
};

struct AsrResult {
  /// Empty when no example is eligible.
  std::optional<double> asr;
  std::size_t evaluated = 0;
  std::vector<ExampleRecord> records;  ///< eligible examples, in dataset order
  ConstraintAudit audit;
};

/// Mean over members of member accuracy.
double eval_clean(const SwitchingPool& pool, const Dataset& data);

/// Indices of examples every member classifies correctly.
std::vector<std::size_t> eligible_indices(const SwitchingPool& pool, const Dataset& data, std::size_t workers = 1);

/// The protocol's test slice of `data`.
Dataset protocol_slice(const Dataset& data, const EvalProtocol& protocol);

AsrResult eval_asr(const SwitchingPool& pool, const AttackConfig& attack, const Dataset& data,
                   const EvalProtocol& protocol = {});

struct EvalRow {
  std::size_t m = 1;
  double epsilon_train = 0.0;
  AttackKind attack = AttackKind::pgd;
  double epsilon_attack = 0.0;
  std::size_t steps = 1;
  Threat threat = Threat::white_box;
  std::size_t eot_samples = 1;
  double clean_accuracy = 0.0;
  std::optional<double> asr;
  std::size_t eligible = 0;
  std::uint64_t memory_bytes = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t attack_seed = 0;
  double wall_time = 0.0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

/// Ordering key used to sort report rows: (master_seed, m, epsilon_train,
/// attack, epsilon_attack, steps, threat, eot_samples, attack_seed).
bool row_key_less(const EvalRow& a, const EvalRow& b);

struct EvalReport {
  std::vector<EvalRow> rows;

  void sort();
};

/// Header plus one line per row. Epsilons are written in shortest
/// round-trip form, accuracy and ASR with six decimals ("undefined" for an
/// undefined ASR), wall time with three. Throws ArgumentError on an empty
/// report, IoError if the file cannot be written.
std::string format_csv(const EvalReport& report);
void emit_csv(const EvalReport& report, const std::filesystem::path& path);
EvalReport parse_csv(std::string_view text, std::string_view source = "<csv>");
EvalReport load_csv(const std::filesystem::path& path);

/// Rounds accuracy, ASR and wall time as emit_csv would.
EvalRow csv_rounded(const EvalRow& row);

struct SweepGrid {
  std::vector<std::size_t> m_values;
  std::vector<double> epsilon_train;
  std::vector<AttackConfig> attacks;
  std::vector<std::uint64_t> master_seeds;
};

struct SweepOptions {
  TrainConfig train;  ///< epsilon_train and seed are overridden per cell
  EvalProtocol protocol;
  std::size_t workers = 1;
  CheckpointCache* cache = nullptr;
  /// Completed rows are stored here and reused on rerun; empty disables.
  std::filesystem::path row_dir;
  std::function<void(const EvalRow&, bool cached)> on_row;
};

/// One pool per (master seed, epsilon_train) with max(m_values) members;
/// each M uses the first M members. Every attack runs against every pool.
EvalReport sweep(const Architecture& arch, const Dataset& train, const Dataset& test, const SweepGrid& grid,
                 const SweepOptions& options);

}  // namespace advms

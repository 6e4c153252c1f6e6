#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advms/architecture.hpp"
#include "advms/attacks.hpp"
#include "advms/dataset.hpp"
#include "advms/evaluation.hpp"
#include "advms/ini.hpp"
#include "advms/training.hpp"

namespace advms {

struct DatasetSection {
  DatasetId id = DatasetId::synthetic;
  /// Directory holding the dataset files. Empty resolves to
  /// $ADVMS_DATA_DIR/<id>, or data/<id> when the variable is unset.
  std::filesystem::path path;
  /// 0 keeps the whole split; otherwise a seeded subset.
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::size_t synthetic_classes = 4;
  std::size_t synthetic_side = 12;
  std::size_t synthetic_train_per_class = 64;
  std::size_t synthetic_test_per_class = 32;
  std::uint64_t seed = 0;
};

struct PoolSection {
  std::size_t m = 2;
  double epsilon_train = 0.0;
  std::uint64_t master_seed = 0;
};

struct SweepSection {
  std::vector<std::size_t> m_values{1, 2, 4};
  std::vector<double> epsilon_train{0.0, 0.1, 0.3};
  /// Empty means {pool.master_seed}.
  std::vector<std::uint64_t> master_seeds;
};

struct OutputSection {
  std::filesystem::path dir = "advms-out";
  /// Empty means <dir>/cache.
  std::filesystem::path cache_dir;
  bool plots = true;
};

/// Effective configuration of a run. Every field has a default; seeds left
/// unset derive from run.seed.
struct RunConfig {
  std::uint64_t seed = 0;
  /// 0 uses every hardware thread.
  std::size_t workers = 0;
  DatasetSection dataset;
  PoolSection pool;
  TrainConfig train;
  std::vector<AttackConfig> attacks;
  EvalProtocol eval;
  SweepSection sweep;
  OutputSection output;

  /// Builds the config from a document. Unknown sections or keys raise
  /// ConfigError. [artifacts] and [command] sections, as written into
  /// manifests, are ignored.
  static RunConfig from_document(const IniDocument& doc);
  /// Every effective field, seeds and resolved paths included.
  IniDocument to_document() const;

  std::filesystem::path cache_dir() const;
  std::vector<std::uint64_t> sweep_seeds() const;
};

/// Applies `section.key=value` overrides. A key of a repeatable section
/// ([attack]) is set in every instance; a missing section is created.
void apply_overrides(IniDocument& doc, const std::vector<std::string>& overrides);

/// Reads `path` (if any), applies overrides, resolves defaults.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::string>& overrides = {});

/// Attack section defaults for a kind: steps 1 (fgsm) or 40, step size
/// 2.5 * epsilon / steps (epsilon for fgsm), random start except for fgsm.
AttackConfig attack_from_section(const IniSection& section, std::uint64_t default_seed);
void attack_to_section(const AttackConfig& attack, IniSection& section);

struct DataSplits {
  Dataset train;
  Dataset test;
};

/// Loads (or generates) both splits and applies the subset counts.
DataSplits load_data(const DatasetSection& section);
Architecture architecture_for(const DatasetSection& section);

}  // namespace advms

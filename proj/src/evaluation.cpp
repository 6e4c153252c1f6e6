#include "advms/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <sstream>
#include <tuple>

#include "advms/error.hpp"
#include "advms/file_util.hpp"
#include "advms/ini.hpp"
#include "advms/network.hpp"
#include "advms/parallel.hpp"

namespace advms {

double eval_clean(const SwitchingPool& pool, const Dataset& data) {
  if (data.empty()) throw ArgumentError("eval_clean needs a nonempty dataset");
  double sum = 0.0;
  for (const Model& m : pool.members()) sum += accuracy(m, data);
  return sum / static_cast<double>(pool.size());
}

namespace {

// fooled[i] = number of members whose prediction on image i differs from its label.
std::vector<std::size_t> count_fooled(const SwitchingPool& pool, const Tensor& images,
                                      std::span<const std::size_t> labels, std::size_t workers) {
  const std::size_t n = labels.size();
  const std::size_t stride = images.size() / n;
  workers = std::min(resolve_workers(workers), std::max<std::size_t>(n, 1));
  std::vector<std::vector<std::unique_ptr<Evaluator<float>>>> evals(workers);
  for (auto& e : evals) e.resize(pool.size());
  std::vector<std::size_t> fooled(n, 0);
  parallel_for(n, workers, [&](std::size_t i, std::size_t w) {
    const auto x = images.data().subspan(i * stride, stride);
    for (std::size_t k = 0; k < pool.size(); ++k) {
      auto& ev = evals[w][k];
      if (!ev) ev = std::make_unique<Evaluator<float>>(pool.member(k));
      if (argmax<float>(ev->forward(x)) != labels[i]) ++fooled[i];
    }
  });
  return fooled;
}

}  // namespace

std::vector<std::size_t> eligible_indices(const SwitchingPool& pool, const Dataset& data, std::size_t workers) {
  if (data.empty()) return {};
  const auto fooled = count_fooled(pool, data.images, data.labels, workers);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fooled.size(); ++i) {
    if (fooled[i] == 0) out.push_back(i);
  }
  return out;
}

Dataset protocol_slice(const Dataset& data, const EvalProtocol& protocol) {
  if (protocol.test_count == 0 || protocol.test_count >= data.size()) return data;
  return subset(data, protocol.test_count, protocol.seed);
}

AsrResult eval_asr(const SwitchingPool& pool, const AttackConfig& attack, const Dataset& data,
                   const EvalProtocol& protocol) {
  if (data.empty()) throw ArgumentError("eval_asr needs a nonempty dataset");
  validate(attack);
  const Dataset slice = protocol_slice(data, protocol);
  AsrResult result;
  result.evaluated = slice.size();
  const auto eligible = eligible_indices(pool, slice, protocol.workers);
  if (eligible.empty()) return result;

  const Dataset targets = slice.take(eligible);
  const AttackBatchResult adv = attack_batch(pool.members(), targets, attack, protocol.workers);
  result.audit = adv.audit;
  const auto fooled = count_fooled(pool, adv.adversarial, targets.labels, protocol.workers);

  double sum = 0.0;
  const double m = static_cast<double>(pool.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ExampleRecord r;
    r.id = targets.ids[i];
    r.label = targets.labels[i];
    r.target_member = adv.targets[i];
    r.members_fooled = fooled[i];
    r.score = static_cast<double>(fooled[i]) / m;
    sum += r.score;
    result.records.push_back(r);
  }
  result.asr = sum / static_cast<double>(targets.size());
  return result;
}

bool row_key_less(const EvalRow& a, const EvalRow& b) {
  auto key = [](const EvalRow& r) {
    return std::make_tuple(r.master_seed, r.m, r.epsilon_train, static_cast<int>(r.attack), r.epsilon_attack, r.steps,
                           static_cast<int>(r.threat), r.eot_samples, r.attack_seed);
  };
  return key(a) < key(b);
}

void EvalReport::sort() { std::stable_sort(rows.begin(), rows.end(), row_key_less); }

namespace {

constexpr const char* kHeader =
    "M,epsilon_train,attack,epsilon_attack,steps,threat,eot_samples,clean_accuracy,asr,eligible,memory_bytes,"
    "master_seed,attack_seed,wall_time";
constexpr std::size_t kColumns = 14;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double round_to(double v, int digits) { return std::stod(fixed(v, digits)); }

std::string csv_line(const EvalRow& r) {
  std::ostringstream out;
  out << r.m << ',' << format_double(r.epsilon_train) << ',' << to_string(r.attack) << ','
      << format_double(r.epsilon_attack) << ',' << r.steps << ',' << to_string(r.threat) << ',' << r.eot_samples
      << ',' << fixed(r.clean_accuracy, 6) << ',' << (r.asr ? fixed(*r.asr, 6) : std::string("undefined")) << ','
      << r.eligible << ',' << r.memory_bytes << ',' << r.master_seed << ',' << r.attack_seed << ','
      << fixed(r.wall_time, 3);
  return out.str();
}

}  // namespace

EvalRow csv_rounded(const EvalRow& row) {
  EvalRow r = row;
  r.clean_accuracy = round_to(r.clean_accuracy, 6);
  if (r.asr) r.asr = round_to(*r.asr, 6);
  r.wall_time = round_to(r.wall_time, 3);
  return r;
}

std::string format_csv(const EvalReport& report) {
  if (report.rows.empty()) throw ArgumentError("refusing to emit an empty report");
  std::string text = std::string(kHeader) + "\n";
  for (const auto& r : report.rows) text += csv_line(r) + "\n";
  return text;
}

void emit_csv(const EvalReport& report, const std::filesystem::path& path) { write_text(path, format_csv(report)); }

EvalReport parse_csv(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader) {
    throw FormatError(std::string(source) + ": missing or unexpected CSV header");
  }
  EvalReport report;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(trim(cell));
    if (f.size() != kColumns) {
      throw FormatError(where + ": expected " + std::to_string(kColumns) + " fields, got " + std::to_string(f.size()));
    }
    try {
      EvalRow r;
      r.m = parse_u64(f[0], "M");
      r.epsilon_train = parse_real(f[1], "epsilon_train");
      r.attack = parse_attack_kind(f[2]);
      r.epsilon_attack = parse_real(f[3], "epsilon_attack");
      r.steps = parse_u64(f[4], "steps");
      r.threat = parse_threat(f[5]);
      r.eot_samples = parse_u64(f[6], "eot_samples");
      r.clean_accuracy = parse_real(f[7], "clean_accuracy");
      if (f[8] != "undefined") r.asr = parse_real(f[8], "asr");
      r.eligible = parse_u64(f[9], "eligible");
      r.memory_bytes = parse_u64(f[10], "memory_bytes");
      r.master_seed = parse_u64(f[11], "master_seed");
      r.attack_seed = parse_u64(f[12], "attack_seed");
      r.wall_time = parse_real(f[13], "wall_time");
      report.rows.push_back(r);
    } catch (const Error& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (report.rows.empty()) throw FormatError(std::string(source) + ": report has no rows");
  return report;
}

EvalReport load_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

namespace {

std::uint64_t attack_fingerprint(const AttackConfig& a) {
  std::uint64_t h = hash_string("attack");
  h = hash_combine(h, static_cast<std::uint64_t>(a.kind));
  h = hash_combine(h, std::bit_cast<std::uint64_t>(a.epsilon));
  h = hash_combine(h, std::bit_cast<std::uint64_t>(a.step_size));
  h = hash_combine(h, a.steps);
  h = hash_combine(h, a.random_start ? 1 : 0);
  h = hash_combine(h, std::bit_cast<std::uint64_t>(a.kappa));
  h = hash_combine(h, static_cast<std::uint64_t>(a.threat));
  h = hash_combine(h, a.eot_samples);
  return hash_combine(h, a.seed);
}

}  // namespace

EvalReport sweep(const Architecture& arch, const Dataset& train, const Dataset& test, const SweepGrid& grid,
                 const SweepOptions& options) {
  if (grid.m_values.empty() || grid.epsilon_train.empty() || grid.attacks.empty() || grid.master_seeds.empty()) {
    throw ArgumentError("sweep grid must have at least one M, epsilon_train, attack and master seed");
  }
  for (std::size_t m : grid.m_values) {
    if (m < 1) throw ArgumentError("sweep M values must be >= 1");
  }
  for (const auto& a : grid.attacks) validate(a);
  const std::size_t max_m = *std::max_element(grid.m_values.begin(), grid.m_values.end());

  const std::uint64_t train_fp = train.fingerprint();
  std::uint64_t base = hash_combine(arch.fingerprint(), train_fp);
  base = hash_combine(base, test.fingerprint());
  base = hash_combine(base, options.train.fingerprint());
  base = hash_combine(base, options.protocol.test_count);
  base = hash_combine(base, options.protocol.seed);

  EvalReport report;
  for (std::uint64_t master : grid.master_seeds) {
    for (double eps_train : grid.epsilon_train) {
      struct Cell {
        std::size_t m;
        const AttackConfig* attack;
        std::filesystem::path file;
      };
      std::vector<Cell> pending;
      for (std::size_t m : grid.m_values) {
        for (const auto& a : grid.attacks) {
          std::uint64_t key = hash_combine(base, master);
          key = hash_combine(key, std::bit_cast<std::uint64_t>(eps_train));
          key = hash_combine(key, m);
          key = hash_combine(key, attack_fingerprint(a));
          std::filesystem::path file;
          if (!options.row_dir.empty()) {
            file = options.row_dir / ("row-" + hex64(key) + ".csv");
            if (std::filesystem::exists(file)) {
              const EvalRow row = load_csv(file).rows.at(0);
              report.rows.push_back(row);
              if (options.on_row) options.on_row(row, true);
              continue;
            }
          }
          pending.push_back({m, &a, file});
        }
      }
      if (pending.empty()) continue;

      TrainConfig tc = options.train;
      tc.epsilon_train = eps_train;
      BuildOptions bo;
      bo.workers = options.workers;
      bo.cache = options.cache;
      const SwitchingPool full = build_pool(arch, train, max_m, tc, master, bo);

      std::map<std::size_t, double> clean;
      const Dataset slice = protocol_slice(test, options.protocol);
      EvalProtocol whole = options.protocol;
      whole.test_count = 0;
      for (const Cell& c : pending) {
        const auto start = std::chrono::steady_clock::now();
        const SwitchingPool pool = full.prefix(c.m);
        if (!clean.count(c.m)) clean[c.m] = eval_clean(pool, slice);
        const AsrResult res = eval_asr(pool, *c.attack, slice, whole);
        EvalRow row;
        row.m = c.m;
        row.epsilon_train = eps_train;
        row.attack = c.attack->kind;
        row.epsilon_attack = c.attack->epsilon;
        row.steps = c.attack->steps;
        row.threat = c.attack->threat;
        row.eot_samples = c.attack->threat == Threat::eot ? c.attack->eot_samples : 1;
        row.clean_accuracy = clean[c.m];
        row.asr = res.asr;
        row.eligible = res.records.size();
        row.memory_bytes = pool_memory_bytes(pool);
        row.master_seed = master;
        row.attack_seed = c.attack->seed;
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        row = csv_rounded(row);
        if (!c.file.empty()) emit_csv(EvalReport{{row}}, c.file);
        report.rows.push_back(row);
        if (options.on_row) options.on_row(row, false);
      }
    }
  }
  report.sort();
  return report;
}

}  // namespace advms

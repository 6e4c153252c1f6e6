// advms: train switching pools, attack them, evaluate and sweep.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "advms/attacks.hpp"
#include "advms/checkpoint.hpp"
#include "advms/config.hpp"
#include "advms/error.hpp"
#include "advms/evaluation.hpp"
#include "advms/file_util.hpp"
#include "advms/parallel.hpp"
#include "advms/plot.hpp"
#include "advms/switching.hpp"
#include "advms/training.hpp"

namespace fs = std::filesystem;
using namespace advms;

namespace {

struct Common {
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
  std::optional<fs::path> pool;
};

struct Loaded {
  IniDocument doc;
  RunConfig cfg;
};

Loaded load(const Common& c) {
  Loaded l;
  if (c.config) l.doc = IniDocument::parse(read_text(*c.config), c.config->string());
  apply_overrides(l.doc, c.overrides);
  l.cfg = RunConfig::from_document(l.doc);
  return l;
}

fs::path pool_path(const Common& c, const Loaded& l) {
  if (c.pool) return *c.pool;
  if (const IniSection* s = l.doc.find("command")) {
    if (const IniEntry* e = s->find("pool")) return e->value;
  }
  return l.cfg.output.dir / "pool.ini";
}

// Effective config plus the command, its inputs and hashes of everything it wrote.
void write_manifest(const RunConfig& cfg, const std::string& command, const std::optional<fs::path>& pool,
                    const std::vector<fs::path>& artifacts) {
  IniDocument doc = cfg.to_document();
  auto& c = doc.add("command");
  c.set("name", command);
  if (pool) c.set("pool", pool->generic_string());
  auto& a = doc.add("artifacts");
  for (const auto& p : artifacts) a.set(p.generic_string(), file_hash(p));
  const fs::path path = cfg.output.dir / (command + "-manifest.ini");
  write_text(path, doc.to_string());
  std::cerr << "manifest: " << path.generic_string() << "\n";
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

int cmd_train(const Common& c) {
  const Loaded l = load(c);
  const RunConfig& cfg = l.cfg;
  const DataSplits data = load_data(cfg.dataset);
  const Architecture arch = architecture_for(cfg.dataset);
  CheckpointCache cache(cfg.cache_dir());
  TrainConfig tc = cfg.train;
  tc.epsilon_train = cfg.pool.epsilon_train;
  BuildOptions bo;
  bo.workers = cfg.workers;
  bo.cache = &cache;
  bo.on_member = [&](std::size_t i, const Model& m, bool hit) {
    std::cerr << "member " << i + 1 << ": seed " << m.init_seed << (hit ? " (cached)" : " (trained)") << "\n";
  };
  const SwitchingPool pool = build_pool(arch, data.train, cfg.pool.m, tc, cfg.pool.master_seed, bo);

  std::vector<fs::path> paths;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "member-%02zu.ckpt", i + 1);
    const fs::path p = cfg.output.dir / "pool" / name;
    save_model(pool.member(i), p);
    paths.push_back(p);
    std::cout << "member " << i + 1 << "  seed " << pool.member(i).init_seed << "  train acc "
              << pct(accuracy(pool.member(i), data.train)) << "  test acc "
              << pct(accuracy(pool.member(i), data.test)) << "\n";
  }
  const fs::path manifest = cfg.output.dir / "pool.ini";
  save_pool_manifest(pool, manifest, paths);
  std::cout << "pool M=" << pool.size() << " epsilon_train=" << format_double(pool.epsilon_train())
            << " memory " << pool_memory_bytes(pool) << " bytes\n";
  paths.push_back(manifest);
  write_manifest(cfg, "train", std::nullopt, paths);
  return 0;
}

int cmd_attack(const Common& c) {
  const Loaded l = load(c);
  const RunConfig& cfg = l.cfg;
  const fs::path pool_file = pool_path(c, l);
  const SwitchingPool pool = load_pool_manifest(pool_file);
  const Dataset slice = protocol_slice(load_data(cfg.dataset).test, cfg.eval);
  std::vector<fs::path> outputs;
  for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
    const AttackConfig& a = cfg.attacks[i];
    const AttackBatchResult r = attack_batch(pool.members(), slice, a, cfg.workers);
    const fs::path out = cfg.output.dir / ("adversarial-" + std::to_string(i + 1) + ".bin");
    save_tensor(r.adversarial, out);
    outputs.push_back(out);
    std::cout << "attack " << i + 1 << " " << to_string(a.kind) << " " << to_string(a.threat)
              << " epsilon=" << format_double(a.epsilon) << "  examples " << slice.size() << "  iterates "
              << r.audit.iterates << "  violations " << r.audit.violations << "  max perturbation "
              << format_double(r.audit.max_perturbation) << "  range [" << format_double(r.audit.min_value) << ", "
              << format_double(r.audit.max_value) << "]\n";
  }
  write_manifest(cfg, "attack", pool_file, outputs);
  return 0;
}

void print_row(const EvalRow& r) {
  std::cout << "M=" << r.m << "  eps_train=" << format_double(r.epsilon_train) << "  " << to_string(r.attack) << " "
            << to_string(r.threat) << (r.threat == Threat::eot ? "(n=" + std::to_string(r.eot_samples) + ")" : "")
            << "  eps=" << format_double(r.epsilon_attack) << "  clean " << pct(r.clean_accuracy) << "  asr "
            << (r.asr ? pct(*r.asr) : std::string("undefined")) << "  eligible " << r.eligible << "  memory "
            << r.memory_bytes << "  seed " << r.master_seed << "\n";
}

int cmd_eval(const Common& c) {
  const Loaded l = load(c);
  const RunConfig& cfg = l.cfg;
  const fs::path pool_file = pool_path(c, l);
  const SwitchingPool pool = load_pool_manifest(pool_file);
  const Dataset slice = protocol_slice(load_data(cfg.dataset).test, cfg.eval);
  EvalProtocol whole = cfg.eval;
  whole.test_count = 0;
  whole.workers = cfg.workers;
  EvalReport report;
  const double clean = eval_clean(pool, slice);
  for (const auto& a : cfg.attacks) {
    const auto start = std::chrono::steady_clock::now();
    const AsrResult res = eval_asr(pool, a, slice, whole);
    EvalRow row;
    row.m = pool.size();
    row.epsilon_train = pool.epsilon_train();
    row.attack = a.kind;
    row.epsilon_attack = a.epsilon;
    row.steps = a.steps;
    row.threat = a.threat;
    row.eot_samples = a.threat == Threat::eot ? a.eot_samples : 1;
    row.clean_accuracy = clean;
    row.asr = res.asr;
    row.eligible = res.records.size();
    row.memory_bytes = pool_memory_bytes(pool);
    row.master_seed = pool.master_seed();
    row.attack_seed = a.seed;
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.rows.push_back(csv_rounded(row));
    print_row(report.rows.back());
  }
  const fs::path out = cfg.output.dir / "eval.csv";
  emit_csv(report, out);
  write_manifest(cfg, "eval", pool_file, {out});
  return 0;
}

int cmd_sweep(const Common& c) {
  const Loaded l = load(c);
  const RunConfig& cfg = l.cfg;
  const DataSplits data = load_data(cfg.dataset);
  const Architecture arch = architecture_for(cfg.dataset);
  CheckpointCache cache(cfg.cache_dir());
  SweepGrid grid{cfg.sweep.m_values, cfg.sweep.epsilon_train, cfg.attacks, cfg.sweep_seeds()};
  SweepOptions opts;
  opts.train = cfg.train;
  opts.protocol = cfg.eval;
  opts.protocol.workers = cfg.workers;
  opts.workers = cfg.workers;
  opts.cache = &cache;
  opts.row_dir = cfg.cache_dir() / "rows";
  opts.on_row = [](const EvalRow& r, bool cached) {
    if (cached) std::cerr << "(cached) ";
    print_row(r);
  };
  const EvalReport report = sweep(arch, data.train, data.test, grid, opts);
  const fs::path out = cfg.output.dir / "sweep.csv";
  emit_csv(report, out);
  std::vector<fs::path> artifacts{out};
  if (cfg.output.plots) {
    write_plots(report, cfg.output.dir);
    artifacts.push_back(cfg.output.dir / "asr_vs_epsilon.svg");
    artifacts.push_back(cfg.output.dir / "tradeoff.svg");
  }
  write_manifest(cfg, "sweep", std::nullopt, artifacts);
  return 0;
}

int cmd_report(const fs::path& csv, const std::optional<fs::path>& plot_dir) {
  const EvalReport report = load_csv(csv);
  for (const auto& r : report.rows) print_row(r);
  if (plot_dir) write_plots(report, *plot_dir);
  return 0;
}

int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const FormatError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const ArgumentError*>(&e)) return 5;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarially trained model-switching defense: training, attacks and evaluation"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_pool) {
    sub->add_option("-c,--config", common.config, "config or manifest file");
    sub->add_option("-s,--set", common.overrides, "override, section.key=value")->allow_extra_args(false);
    if (with_pool) sub->add_option("-p,--pool", common.pool, "pool manifest (default <output.dir>/pool.ini)");
  };
  auto* train = app.add_subcommand("train", "train a switching pool and write its manifest");
  add_common(train, false);
  auto* attack = app.add_subcommand("attack", "attack the test slice and dump adversarial batches");
  add_common(attack, true);
  auto* eval = app.add_subcommand("eval", "clean accuracy and attack success rate of a pool");
  add_common(eval, true);
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate every (M, epsilon_train, attack) combination");
  add_common(sweep_cmd, false);
  auto* report = app.add_subcommand("report", "print a report CSV and optionally redraw its plots");
  fs::path report_csv;
  std::optional<fs::path> plot_dir;
  report->add_option("csv", report_csv, "report CSV")->required();
  report->add_option("--plots", plot_dir, "directory for SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(common);
    if (*attack) return cmd_attack(common);
    if (*eval) return cmd_eval(common);
    if (*sweep_cmd) return cmd_sweep(common);
    if (*report) return cmd_report(report_csv, plot_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--only 1,2,...]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "advms/checkpoint.hpp"
#include "advms/config.hpp"
#include "advms/evaluation.hpp"
#include "advms/file_util.hpp"
#include "advms/grad_check.hpp"
#include "advms/ini.hpp"
#include "advms/training.hpp"

using namespace advms;
namespace fs = std::filesystem;

namespace {

fs::path g_work;

std::size_t cores() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path mnist_dir() {
  if (const char* env = std::getenv("ADVMS_DATA_DIR"); env && *env) return fs::path(env) / "mnist";
  return fs::path(ADVMS_SOURCE_DIR) / "data" / "mnist";
}

Tensor uniform_image(const Shape& shape, Rng& rng) {
  Tensor x(shape);
  for (auto& v : x.data()) v = static_cast<float>(uniform01(rng));
  return x;
}

// Desk-scale MNIST setup shared by the trend and trade-off runs.
std::string mnist_ini() {
  return "[dataset]\nid = mnist\npath = " + mnist_dir().string() +
         "\ntrain_count = 2000\ntest_count = 500\n"
         "[train]\nepochs = 3\nbatch_size = 8\nlearning_rate = 0.02\nmomentum = 0\ninner_steps = 3\n";
}

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" ADVMS_CLI "' " + args + " > out.txt 2> err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------

Verdict gradients() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checks = 0, draws = 0;
  for (DatasetId id : {DatasetId::mnist, DatasetId::synthetic}) {
    const Architecture arch = build_architecture(id);
    for (std::uint64_t d = 0; d < 20; ++d) {
      Rng rng = derive_stream(d, "acceptance-gradcheck", static_cast<std::uint64_t>(id));
      const Model m = init_params(arch, rng());
      const Tensor x = uniform_image(arch.input_shape(), rng);
      const std::size_t y = uniform_index(rng, arch.num_classes());
      for (LossKind k : {LossKind::ce, LossKind::cw}) {
        GradCheckOptions o;
        o.seed = rng();
        const GradCheckResult r = grad_check(m, x, y, k, o);
        worst = std::max(worst, r.max_rel_error);
        checks += r.checks;
      }
      ++draws;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-5 && secs < 120.0 && checks > 0,
          std::to_string(draws) + " draws, " + std::to_string(checks) + " probes, max rel error " +
              fmt("%.3g", worst) + ", " + fmt("%.1f", secs) + " s"};
}

// Records every point the attack queries a gradient at.
class Spy final : public GradientOracle {
 public:
  Spy(GradientOracle& inner, std::span<const float> x, double eps) : inner_(inner), x_(x), eps_(eps) {}
  const Shape& input_shape() const override { return inner_.input_shape(); }
  void gradient(std::span<const float> x, std::size_t y, LossKind kind, float kappa, std::span<float> out,
                Rng& rng) override {
    check(x);
    inner_.gradient(x, y, kind, kappa, out, rng);
  }
  void check(std::span<const float> x) {
    ++seen;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = std::abs(static_cast<double>(x[i]) - x_[i]);
      if (d > eps_ + 1e-6 || x[i] < 0.0f || x[i] > 1.0f) {
        ++violations;
        return;
      }
    }
  }
  std::size_t seen = 0, violations = 0;

 private:
  GradientOracle& inner_;
  std::span<const float> x_;
  double eps_;
};

Verdict constraints() {
  const double budgets[] = {2.0 / 255.0, 8.0 / 255.0, 0.1, 0.3};
  const Architecture archs[] = {build_architecture(DatasetId::synthetic), build_architecture(DatasetId::mnist)};
  std::size_t runs = 0, iterates = 0, violations = 0, audited = 0;
  for (std::uint64_t r = 0; r < 1000; ++r) {
    Rng rng = derive_stream(r, "acceptance-audit");
    const Architecture& arch = archs[r % 2];
    const std::vector<Model> members{init_params(arch, rng()), init_params(arch, rng())};
    const Tensor x = uniform_image(arch.input_shape(), rng);
    const std::size_t y = uniform_index(rng, arch.num_classes());
    AttackConfig c;
    c.kind = (r / 2) % 2 ? AttackKind::cw_pgd : AttackKind::pgd;
    c.epsilon = budgets[(r / 4) % 4];
    c.steps = 1 + uniform_index(rng, 10);
    c.step_size = c.epsilon * uniform(rng, 0.05, 1.0);
    c.random_start = rng() & 1;
    c.kappa = (rng() & 1) ? 0.0 : 5.0;
    const bool eot = r % 8 >= 6;
    ModelOracle white(members[0]);
    EotOracle pooled(members, 3);
    Spy spy(eot ? static_cast<GradientOracle&>(pooled) : white, x.data(), c.epsilon);
    ConstraintAudit audit;
    Rng attack_rng = derive_stream(r, "acceptance-attack");
    const Tensor adv = pgd(spy, x, y, c, attack_rng, &audit);
    spy.check(adv.data());
    ++runs;
    iterates += spy.seen;
    violations += spy.violations + audit.violations;
    audited += audit.iterates;
  }
  return {violations == 0 && runs == 1000,
          std::to_string(runs) + " runs, " + std::to_string(iterates) + " iterates (" + std::to_string(audited) +
              " audited), " + std::to_string(violations) + " violations"};
}

Verdict reductions() {
  std::ostringstream why;
  bool ok = true;

  double fgsm_gap = 0.0, eot_gap = 0.0;
  for (DatasetId id : {DatasetId::synthetic, DatasetId::mnist}) {
    const Architecture arch = build_architecture(id);
    for (std::uint64_t d = 0; d < 50; ++d) {
      Rng rng = derive_stream(d, "acceptance-reduction", static_cast<std::uint64_t>(id));
      const Model m = init_params(arch, rng());
      const Tensor x = uniform_image(arch.input_shape(), rng);
      const std::size_t y = uniform_index(rng, arch.num_classes());
      const double eps = uniform(rng, 0.01, 0.3);
      ModelOracle o(m);
      AttackConfig c;
      c.kind = AttackKind::pgd;
      c.epsilon = eps;
      c.step_size = eps;
      c.steps = 1;
      c.random_start = false;
      const Tensor a = pgd(o, x, y, c, rng);
      const Tensor b = fgsm(o, x, y, eps);
      for (std::size_t i = 0; i < a.size(); ++i) fgsm_gap = std::max(fgsm_gap, std::abs(double(a[i]) - b[i]));

      const std::vector<Model> one{m};
      for (LossKind k : {LossKind::ce, LossKind::cw}) {
        const Tensor g = input_gradient(m, x, y, k);
        const Tensor e = eot_gradient(one, x, y, 1 + d % 10, k, rng);
        for (std::size_t i = 0; i < g.size(); ++i) eot_gap = std::max(eot_gap, std::abs(double(g[i]) - e[i]));
      }
    }
  }
  ok = ok && fgsm_gap <= 1e-6 && eot_gap <= 1e-6;
  why << "pgd/fgsm gap " << fmt("%.3g", fgsm_gap) << ", eot/input gradient gap " << fmt("%.3g", eot_gap);

  const Architecture arch = build_architecture(DatasetId::synthetic);
  const Dataset train = make_synthetic(4, 32, 12, 11);
  const Dataset test = make_synthetic(4, 25, 12, 12);
  TrainConfig tc;
  tc.batch_size = 16;
  tc.seed = 5;
  const Model model = train_standard(arch, train, tc);
  const SwitchingPool pool({model}, 0);
  double eval_gap = std::abs(eval_clean(pool, test) - accuracy(model, test));
  for (AttackKind kind : {AttackKind::pgd, AttackKind::cw_pgd}) {
    for (double eps : {0.05, 0.15}) {
      AttackConfig c = kind == AttackKind::pgd ? pgd_config(eps, 10) : cw_pgd_config(eps, 10);
      c.seed = 23;
      const AsrResult r = eval_asr(pool, c, test);
      ModelOracle o(model);
      std::size_t eligible = 0, fooled = 0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const Tensor x = test.image_tensor(i);
        if (predict_class(model, x) != test.labels[i]) continue;
        ++eligible;
        Rng rng = attack_stream(c.seed, test.ids[i]);
        if (predict_class(model, pgd(o, x, test.labels[i], c, rng)) != test.labels[i]) ++fooled;
      }
      if (!r.asr || eligible == 0) {
        eval_gap = 1.0;
        continue;
      }
      eval_gap = std::max(eval_gap, std::abs(*r.asr - double(fooled) / double(eligible)));
    }
  }
  ok = ok && eval_gap <= 1e-6;
  why << ", M=1 evaluation gap " << fmt("%.3g", eval_gap);

  std::size_t mismatched = 0;
  const DataSplits mn = load_data(RunConfig::from_document(IniDocument::parse(
                                      "[dataset]\nid = mnist\npath = " + mnist_dir().string() +
                                      "\ntrain_count = 300\ntest_count = 10\n"))
                                      .dataset);
  for (const auto& [a, data] : {std::pair{arch, train}, std::pair{build_architecture(DatasetId::mnist), mn.train}}) {
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 16;
    c.seed = 77;
    const Model s = train_standard(a, data, c);
    const Model t = train_adversarial(a, data, c);
    if (!(s.params == t.params)) ++mismatched;
  }
  ok = ok && mismatched == 0;
  why << ", epsilon_train=0 parameter mismatches " << mismatched;
  return {ok, why.str()};
}

Verdict switching() {
  const double critical[] = {0.0, 10.828, 0.0, 16.266, 0.0, 0.0, 0.0, 24.322};
  std::ostringstream why;
  bool ok = true;
  const Architecture arch = build_architecture(DatasetId::synthetic);
  for (std::size_t m : {2, 4, 8}) {
    std::vector<Model> models;
    for (std::size_t i = 1; i <= m; ++i) models.push_back(init_params(arch, member_seed(3, i)));
    const SwitchingPool pool(std::move(models), 3);
    std::vector<double> counts(m);
    Rng rng = derive_stream(m, "acceptance-switch");
    const std::size_t draws = 10000;
    for (std::size_t d = 0; d < draws; ++d) counts[activate(pool, rng)] += 1.0;
    double chi2 = 0.0;
    const double expected = double(draws) / double(m);
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    ok = ok && chi2 < critical[m - 1];
    why << "M=" << m << " chi2 " << fmt("%.2f", chi2) << "/" << critical[m - 1] << ", ";
  }

  bool linear = true;
  for (DatasetId id : {DatasetId::synthetic, DatasetId::mnist, DatasetId::cifar10}) {
    const Architecture a = build_architecture(id);
    std::vector<Model> models;
    for (std::size_t i = 1; i <= 8; ++i) models.push_back(init_params(a, member_seed(4, i)));
    const SwitchingPool pool(std::move(models), 4);
    const std::uint64_t one = pool_memory_bytes(pool.prefix(1));
    for (std::size_t m = 1; m <= 8; ++m) linear = linear && pool_memory_bytes(pool.prefix(m)) == m * one;
  }
  ok = ok && linear;
  why << "memory " << (linear ? "linear" : "NOT linear");

  const Dataset train = make_synthetic(4, 32, 12, 21);
  const Dataset test = make_synthetic(4, 25, 12, 22);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  const SwitchingPool pool = build_pool(arch, train, 5, tc, 8);
  bool clean = true;
  for (std::size_t m = 1; m <= pool.size(); ++m) {
    const SwitchingPool p = pool.prefix(m);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += accuracy(p.member(i), test);
    clean = clean && eval_clean(p, test) == sum / double(m);
  }
  ok = ok && clean;
  why << ", clean accuracy " << (clean ? "equals" : "DIFFERS FROM") << " the member mean";
  return {ok, why.str()};
}

// ---------------------------------------------------------------------------

struct SeedTrend {
  double single = 0, adv_single = 0, pool_snapshot = 0, pool_eot = 0, advms_eot = 0, advms_snapshot = 0;
  double clean_std = 0, clean_adv = 0;
};

double asr_or_zero(const AsrResult& r) { return r.asr.value_or(0.0); }

Verdict trends() {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig cfg = RunConfig::from_document(IniDocument::parse(mnist_ini()));
  const DataSplits data = load_data(cfg.dataset);
  const Architecture arch = architecture_for(cfg.dataset);
  CheckpointCache cache(g_work / "cache");
  BuildOptions bo;
  bo.workers = cores();
  bo.cache = &cache;
  EvalProtocol protocol;
  protocol.workers = cores();

  AttackConfig white = pgd_config(0.3, 40);
  white.seed = 1001;
  AttackConfig eot = white;
  eot.threat = Threat::eot;
  eot.eot_samples = 10;

  std::vector<SeedTrend> seeds;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig tc = cfg.train;
    tc.epsilon_train = 0.0;
    const SwitchingPool standard = build_pool(arch, data.train, 4, tc, seed, bo);
    tc.epsilon_train = 0.3;
    const SwitchingPool advms = build_pool(arch, data.train, 4, tc, seed, bo);

    SeedTrend t;
    t.clean_std = eval_clean(standard.prefix(1), data.test);
    t.clean_adv = eval_clean(advms.prefix(1), data.test);
    t.single = asr_or_zero(eval_asr(standard.prefix(1), white, data.test, protocol));
    t.adv_single = asr_or_zero(eval_asr(advms.prefix(1), white, data.test, protocol));
    t.pool_snapshot = asr_or_zero(eval_asr(standard, white, data.test, protocol));
    t.pool_eot = asr_or_zero(eval_asr(standard, eot, data.test, protocol));
    t.advms_snapshot = asr_or_zero(eval_asr(advms, white, data.test, protocol));
    t.advms_eot = asr_or_zero(eval_asr(advms, eot, data.test, protocol));
    std::printf(
        "  seed %llu: clean %.3f / %.3f (standard / eps_train 0.3); asr single %.3f, adv single %.3f, "
        "pool snapshot %.3f, pool eot %.3f, advms snapshot %.3f, advms eot %.3f\n",
        static_cast<unsigned long long>(seed), t.clean_std, t.clean_adv, t.single, t.adv_single, t.pool_snapshot,
        t.pool_eot, t.advms_snapshot, t.advms_eot);
    std::fflush(stdout);
    seeds.push_back(t);
  }

  auto count = [&](auto pred) {
    return static_cast<int>(std::count_if(seeds.begin(), seeds.end(), pred));
  };
  const int a = count([](const SeedTrend& t) { return t.single >= 0.80; });
  const int b = count([](const SeedTrend& t) { return t.single - t.adv_single >= 0.30; });
  const int c1 = count([](const SeedTrend& t) { return t.single - t.pool_snapshot >= 0.10; });
  const int c2 = count([](const SeedTrend& t) { return t.pool_eot > t.pool_snapshot; });
  const int d = count([](const SeedTrend& t) {
    const double pool_best = std::max(t.pool_snapshot, t.pool_eot);
    return t.advms_eot < t.adv_single && t.advms_eot < pool_best;
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream why;
  why << "(a) " << a << "/3, (b) " << b << "/3, (c) " << c1 << "/3 and " << c2 << "/3, (d) " << d << "/3, "
      << fmt("%.0f", secs) << " s";
  return {a >= 2 && b >= 2 && c1 >= 2 && c2 >= 2 && d >= 2, why.str()};
}

Verdict tradeoff() {
  const fs::path dir = g_work / "tradeoff";
  fs::create_directories(dir);
  write_text(dir / "sweep.ini", mnist_ini() +
                                    "[attack]\nkind = pgd\nepsilon = 8/255\nsteps = 10\nseed = 1002\n"
                                    "[sweep]\nM = 1, 2, 4\nepsilon_train = 0, 0.1, 0.3\nmaster_seeds = 1, 2, 3\n"
                                    "[output]\ndir = out\ncache_dir = " +
                                    (g_work / "cache").string() + "\n");
  const int code = run_cli(dir, "sweep -c sweep.ini");
  if (code != 0) return {false, "sweep exited with " + std::to_string(code) + ": " + read_text(dir / "err.txt")};
  const EvalReport report = load_csv(dir / "out" / "sweep.csv");

  std::map<std::pair<std::uint64_t, double>, std::uint64_t> unit;
  for (const auto& r : report.rows)
    if (r.m == 1) unit[{r.master_seed, r.epsilon_train}] = r.memory_bytes;
  bool linear = report.rows.size() == 27;
  for (const auto& r : report.rows) {
    const auto it = unit.find({r.master_seed, r.epsilon_train});
    linear = linear && it != unit.end() && r.memory_bytes == r.m * it->second;
  }

  std::map<std::uint64_t, std::map<std::size_t, std::map<double, double>>> clean;
  for (const auto& r : report.rows) clean[r.master_seed][r.m][r.epsilon_train] = r.clean_accuracy;
  int monotone = 0;
  std::ostringstream why;
  for (const auto& [seed, by_m] : clean) {
    bool ok = true;
    for (const auto& [m, by_eps] : by_m) {
      double prev = 2.0;
      for (const auto& [eps, acc] : by_eps) {
        ok = ok && acc <= prev;
        prev = acc;
      }
    }
    monotone += ok;
    why << "seed " << seed << " clean";
    for (const auto& [eps, acc] : by_m.begin()->second) why << " " << fmt("%.3f", acc);
    why << (ok ? " ok; " : " NOT monotone; ");
  }
  why << "memory " << (linear ? "linear" : "NOT linear") << ", " << monotone << "/3 seeds monotone";
  return {linear && monotone >= 2, why.str()};
}

// Drops the hashes of CSV artifacts, which cover the wall-time column.
std::string manifest_without_csv_hashes(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::string out, line;
  while (std::getline(in, line))
    if (line.find(".csv") == std::string::npos) out += line + "\n";
  return out;
}

EvalReport without_wall_time(EvalReport r) {
  for (auto& row : r.rows) row.wall_time = 0.0;
  return r;
}

Verdict reproducibility() {
  const fs::path dir = g_work / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_text(dir / "run.ini",
             "[dataset]\nid = mnist\npath = " + mnist_dir().string() +
                 "\ntrain_count = 300\ntest_count = 60\n"
                 "[pool]\nM = 2\nepsilon_train = 0.1\n[train]\nepochs = 1\nbatch_size = 16\ninner_steps = 3\n"
                 "[attack]\nkind = pgd\nepsilon = 0.1\nsteps = 5\n"
                 "[attack]\nkind = cw_pgd\nepsilon = 0.1\nsteps = 5\nthreat = eot\neot_samples = 3\n"
                 "[sweep]\nM = 1, 2\nepsilon_train = 0, 0.1\n");
  const char* commands[] = {"train", "attack", "eval", "sweep"};
  for (const char* c : commands) {
    if (const int code = run_cli(dir, std::string(c) + " -c run.ini"); code != 0)
      return {false, std::string(c) + " exited with " + std::to_string(code)};
  }
  fs::rename(dir / "advms-out", dir / "first");
  for (const char* c : commands) {
    const std::string m = std::string(c) + "-manifest.ini";
    fs::copy_file(dir / "first" / m, dir / m, fs::copy_options::overwrite_existing);
    if (const int code = run_cli(dir, std::string(c) + " -c " + m); code != 0)
      return {false, "rerun of " + std::string(c) + " exited with " + std::to_string(code)};
  }

  std::size_t files = 0, differ = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(dir / "first")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir / "first");
    if (*rel.begin() == "cache") continue;
    const fs::path again = dir / "advms-out" / rel;
    bool same = fs::exists(again);
    if (same && rel.extension() == ".csv") {
      same = without_wall_time(load_csv(e.path())).rows == without_wall_time(load_csv(again)).rows;
    } else if (same && rel.filename().string().ends_with("-manifest.ini")) {
      same = manifest_without_csv_hashes(e.path()) == manifest_without_csv_hashes(again);
    } else if (same) {
      same = read_text(e.path()) == read_text(again);
    }
    ++files;
    if (!same) {
      ++differ;
      if (first_diff.empty()) first_diff = rel.generic_string();
    }
  }
  std::string why = std::to_string(files) + " outputs compared, " + std::to_string(differ) + " differ";
  if (!first_diff.empty()) why += " (first: " + first_diff + ")";
  return {differ == 0 && files >= 8, why};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::string work = "acceptance-work";
  std::vector<int> only;
  app.add_option("--work", work, "scratch and cache directory");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  g_work = fs::absolute(work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient soundness", gradients},     {"attack constraints", constraints},
      {"reduction identities", reductions},  {"switching statistics", switching},
      {"desk-scale trends", trends},         {"trade-off report", tradeoff},
      {"reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}

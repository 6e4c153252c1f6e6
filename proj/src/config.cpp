#include "advms/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "advms/error.hpp"
#include "advms/file_util.hpp"
#include "advms/rng.hpp"

namespace advms {
namespace {

std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view tag, std::uint64_t index = 0) {
  return hash_combine(hash_combine(run_seed, hash_string(tag)), index);
}

// Tracks which keys of a section were consumed so leftovers can be reported.
class Reader {
 public:
  explicit Reader(const IniSection* s) : s_(s) {}

  const std::string* raw(std::string_view key) {
    used_.insert(std::string(key));
    if (!s_) return nullptr;
    const IniEntry* e = s_->find(key);
    return e ? &e->value : nullptr;
  }
  std::string what(std::string_view key) const { return (s_ ? s_->name : std::string("?")) + "." + std::string(key); }

  std::uint64_t u64(std::string_view key, std::uint64_t fallback) {
    const auto* v = raw(key);
    return v ? parse_u64(*v, what(key)) : fallback;
  }
  std::size_t size(std::string_view key, std::size_t fallback) { return static_cast<std::size_t>(u64(key, fallback)); }
  double real(std::string_view key, double fallback) {
    const auto* v = raw(key);
    return v ? parse_real(*v, what(key)) : fallback;
  }
  bool boolean(std::string_view key, bool fallback) {
    const auto* v = raw(key);
    return v ? parse_bool(*v, what(key)) : fallback;
  }
  std::string text(std::string_view key, std::string fallback) {
    const auto* v = raw(key);
    return v ? *v : fallback;
  }

  void finish() const {
    if (!s_) return;
    for (const auto& e : s_->entries) {
      if (!used_.count(e.key)) {
        throw ConfigError("unknown key '" + e.key + "' in section [" + s_->name + "] (line " +
                          std::to_string(e.line) + ")");
      }
    }
  }

 private:
  const IniSection* s_;
  std::set<std::string> used_;
};

const IniSection* single(const IniDocument& doc, std::string_view name) {
  const auto all = doc.find_all(name);
  if (all.size() > 1) throw ConfigError("section [" + std::string(name) + "] may appear only once");
  return all.empty() ? nullptr : all.front();
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse(item));
  return out;
}

template <typename T, typename Format>
std::string join(const std::vector<T>& values, Format format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format(values[i]);
  }
  return out;
}

std::filesystem::path default_data_path(DatasetId id) {
  if (const char* env = std::getenv("ADVMS_DATA_DIR"); env && *env) {
    return std::filesystem::path(env) / std::string(to_string(id));
  }
  return std::filesystem::path("data") / std::string(to_string(id));
}

}  // namespace

AttackConfig attack_from_section(const IniSection& section, std::uint64_t default_seed) {
  Reader r(&section);
  AttackConfig a;
  a.kind = parse_attack_kind(r.text("kind", "pgd"));
  a.epsilon = r.real("epsilon", 0.1);
  const bool fgsm = a.kind == AttackKind::fgsm;
  a.steps = r.size("steps", fgsm ? 1 : 40);
  if (a.steps == 0) throw ConfigError(r.what("steps") + " must be >= 1");
  const double step = r.real("step_size", 0.0);
  a.step_size = step > 0.0 ? step : (fgsm ? a.epsilon : 2.5 * a.epsilon / static_cast<double>(a.steps));
  a.step_size = std::min(a.step_size, a.epsilon);
  a.random_start = r.boolean("random_start", !fgsm);
  a.kappa = r.real("kappa", 0.0);
  a.threat = parse_threat(r.text("threat", "white_box"));
  a.eot_samples = r.size("eot_samples", a.threat == Threat::eot ? 10 : 1);
  a.seed = r.u64("seed", default_seed);
  r.finish();
  try {
    validate(a);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("[attack]: ") + e.what());
  }
  return a;
}

void attack_to_section(const AttackConfig& a, IniSection& s) {
  s.set("kind", std::string(to_string(a.kind)));
  s.set("epsilon", format_double(a.epsilon));
  s.set("steps", std::to_string(a.steps));
  s.set("step_size", format_double(a.step_size));
  s.set("random_start", a.random_start ? "true" : "false");
  s.set("kappa", format_double(a.kappa));
  s.set("threat", std::string(to_string(a.threat)));
  s.set("eot_samples", std::to_string(a.eot_samples));
  s.set("seed", std::to_string(a.seed));
}

RunConfig RunConfig::from_document(const IniDocument& doc) {
  static const std::set<std::string> known = {"dataset", "pool", "train", "attack", "eval", "sweep",
                                              "output",  "run",  "artifacts", "command"};
  for (const auto& s : doc.sections()) {
    if (s.name.empty() && s.entries.empty()) continue;
    if (!known.count(s.name)) {
      throw ConfigError("unknown section [" + s.name + "] (line " + std::to_string(s.line) + ")");
    }
  }
  RunConfig c;
  {
    Reader r(single(doc, "run"));
    c.seed = r.u64("seed", 0);
    c.workers = r.size("workers", 0);
    r.finish();
  }
  {
    Reader r(single(doc, "dataset"));
    auto& d = c.dataset;
    d.id = parse_dataset_id(r.text("id", "synthetic"));
    const std::string path = r.text("path", "");
    d.path = path.empty() ? default_data_path(d.id) : std::filesystem::path(path);
    d.train_count = r.size("train_count", 0);
    d.test_count = r.size("test_count", 0);
    d.synthetic_classes = r.size("synthetic_classes", d.synthetic_classes);
    d.synthetic_side = r.size("synthetic_side", d.synthetic_side);
    d.synthetic_train_per_class = r.size("synthetic_train_per_class", d.synthetic_train_per_class);
    d.synthetic_test_per_class = r.size("synthetic_test_per_class", d.synthetic_test_per_class);
    d.seed = r.u64("seed", derive_seed(c.seed, "dataset"));
    r.finish();
  }
  {
    Reader r(single(doc, "pool"));
    c.pool.m = r.size("M", c.pool.m);
    c.pool.epsilon_train = r.real("epsilon_train", 0.0);
    c.pool.master_seed = r.u64("master_seed", derive_seed(c.seed, "pool"));
    r.finish();
  }
  {
    Reader r(single(doc, "train"));
    auto& t = c.train;
    t.epochs = r.size("epochs", t.epochs);
    t.batch_size = r.size("batch_size", t.batch_size);
    t.learning_rate = r.real("learning_rate", t.learning_rate);
    t.momentum = r.real("momentum", t.momentum);
    t.inner_steps = r.size("inner_steps", t.inner_steps);
    t.inner_step_size = r.real("inner_step_size", t.inner_step_size);
    r.finish();
    t.epsilon_train = c.pool.epsilon_train;
    try {
      validate(t);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("[train]: ") + e.what());
    }
  }
  {
    const auto sections = doc.find_all("attack");
    if (sections.empty()) {
      IniSection empty{"attack", {}, 0};
      c.attacks.push_back(attack_from_section(empty, derive_seed(c.seed, "attack", 0)));
    }
    for (std::size_t i = 0; i < sections.size(); ++i) {
      c.attacks.push_back(attack_from_section(*sections[i], derive_seed(c.seed, "attack", i)));
    }
  }
  {
    Reader r(single(doc, "eval"));
    c.eval.test_count = r.size("test_count", 0);
    c.eval.seed = r.u64("seed", derive_seed(c.seed, "eval"));
    r.finish();
  }
  {
    Reader r(single(doc, "sweep"));
    if (const auto* v = r.raw("M")) {
      c.sweep.m_values = parse_list<std::size_t>(*v, [&](const std::string& s) { return parse_u64(s, "sweep.M"); });
    }
    if (const auto* v = r.raw("epsilon_train")) {
      c.sweep.epsilon_train =
          parse_list<double>(*v, [&](const std::string& s) { return parse_real(s, "sweep.epsilon_train"); });
    }
    if (const auto* v = r.raw("master_seeds")) {
      c.sweep.master_seeds =
          parse_list<std::uint64_t>(*v, [&](const std::string& s) { return parse_u64(s, "sweep.master_seeds"); });
    }
    r.finish();
    if (c.sweep.m_values.empty() || c.sweep.epsilon_train.empty()) {
      throw ConfigError("sweep.M and sweep.epsilon_train must be nonempty");
    }
    for (auto m : c.sweep.m_values) {
      if (m == 0) throw ConfigError("sweep.M values must be >= 1");
    }
  }
  {
    Reader r(single(doc, "output"));
    c.output.dir = r.text("dir", c.output.dir.string());
    c.output.cache_dir = r.text("cache_dir", "");
    c.output.plots = r.boolean("plots", true);
    r.finish();
  }
  return c;
}

IniDocument RunConfig::to_document() const {
  IniDocument doc;
  auto& run = doc.add("run");
  run.set("seed", std::to_string(seed));
  run.set("workers", std::to_string(workers));
  auto& d = doc.add("dataset");
  d.set("id", std::string(to_string(dataset.id)));
  d.set("path", dataset.path.generic_string());
  d.set("train_count", std::to_string(dataset.train_count));
  d.set("test_count", std::to_string(dataset.test_count));
  d.set("synthetic_classes", std::to_string(dataset.synthetic_classes));
  d.set("synthetic_side", std::to_string(dataset.synthetic_side));
  d.set("synthetic_train_per_class", std::to_string(dataset.synthetic_train_per_class));
  d.set("synthetic_test_per_class", std::to_string(dataset.synthetic_test_per_class));
  d.set("seed", std::to_string(dataset.seed));
  auto& p = doc.add("pool");
  p.set("M", std::to_string(pool.m));
  p.set("epsilon_train", format_double(pool.epsilon_train));
  p.set("master_seed", std::to_string(pool.master_seed));
  auto& t = doc.add("train");
  t.set("epochs", std::to_string(train.epochs));
  t.set("batch_size", std::to_string(train.batch_size));
  t.set("learning_rate", format_double(train.learning_rate));
  t.set("momentum", format_double(train.momentum));
  t.set("inner_steps", std::to_string(train.inner_steps));
  t.set("inner_step_size", format_double(train.inner_step_size));
  for (const auto& a : attacks) attack_to_section(a, doc.add("attack"));
  auto& e = doc.add("eval");
  e.set("test_count", std::to_string(eval.test_count));
  e.set("seed", std::to_string(eval.seed));
  auto& s = doc.add("sweep");
  s.set("M", join(sweep.m_values, [](std::size_t v) { return std::to_string(v); }));
  s.set("epsilon_train", join(sweep.epsilon_train, [](double v) { return format_double(v); }));
  s.set("master_seeds", join(sweep_seeds(), [](std::uint64_t v) { return std::to_string(v); }));
  auto& o = doc.add("output");
  o.set("dir", output.dir.generic_string());
  o.set("cache_dir", cache_dir().generic_string());
  o.set("plots", output.plots ? "true" : "false");
  return doc;
}

std::filesystem::path RunConfig::cache_dir() const {
  return output.cache_dir.empty() ? output.dir / "cache" : output.cache_dir;
}

std::vector<std::uint64_t> RunConfig::sweep_seeds() const {
  return sweep.master_seeds.empty() ? std::vector<std::uint64_t>{pool.master_seed} : sweep.master_seeds;
}

void apply_overrides(IniDocument& doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    const std::string section = trim(std::string_view(o).substr(0, dot));
    const std::string key = trim(std::string_view(o).substr(dot + 1, eq - dot - 1));
    const std::string value = trim(std::string_view(o).substr(eq + 1));
    if (section.empty() || key.empty()) throw ConfigError("override '" + o + "' has an empty section or key");
    bool found = false;
    for (auto& s : doc.sections()) {
      if (s.name == section) {
        s.set(key, value);
        found = true;
      }
    }
    if (!found) doc.add(section).set(key, value);
  }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  IniDocument doc;
  if (path) doc = IniDocument::parse(read_text(*path), path->string());
  apply_overrides(doc, overrides);
  return RunConfig::from_document(doc);
}

Architecture architecture_for(const DatasetSection& d) {
  SyntheticShape shape;
  shape.side = d.synthetic_side;
  shape.num_classes = d.synthetic_classes;
  return build_architecture(d.id, shape);
}

DataSplits load_data(const DatasetSection& d) {
  DataSplits out;
  switch (d.id) {
    case DatasetId::synthetic:
      out.train = make_synthetic(d.synthetic_classes, d.synthetic_train_per_class, d.synthetic_side,
                                 derive_seed(d.seed, "train"));
      out.test = make_synthetic(d.synthetic_classes, d.synthetic_test_per_class, d.synthetic_side,
                                derive_seed(d.seed, "test"));
      break;
    case DatasetId::mnist:
      out.train = load_mnist(d.path / "train-images-idx3-ubyte", d.path / "train-labels-idx1-ubyte");
      out.test = load_mnist(d.path / "t10k-images-idx3-ubyte", d.path / "t10k-labels-idx1-ubyte");
      break;
    case DatasetId::cifar10: {
      std::vector<std::filesystem::path> train;
      for (int i = 1; i <= 5; ++i) train.push_back(d.path / ("data_batch_" + std::to_string(i) + ".bin"));
      const std::filesystem::path test[] = {d.path / "test_batch.bin"};
      out.train = load_cifar10(train);
      out.test = load_cifar10(test);
      break;
    }
  }
  if (d.train_count > 0 && d.train_count < out.train.size()) {
    out.train = subset(out.train, d.train_count, derive_seed(d.seed, "train-subset"));
  }
  if (d.test_count > 0 && d.test_count < out.test.size()) {
    out.test = subset(out.test, d.test_count, derive_seed(d.seed, "test-subset"));
  }
  return out;
}

}  // namespace advms

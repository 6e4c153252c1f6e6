#include "advms/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advms/binary_io.hpp"
#include "advms/error.hpp"
#include "advms/file_util.hpp"
#include "advms/parallel.hpp"

namespace advms {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::cw_pgd: return "cw_pgd";
  }
  return "unknown";
}

std::string_view to_string(Threat threat) { return threat == Threat::white_box ? "white_box" : "eot"; }

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "cw_pgd") return AttackKind::cw_pgd;
  throw ConfigError("unknown attack kind '" + std::string(name) + "' (expected fgsm, pgd or cw_pgd)");
}

Threat parse_threat(std::string_view name) {
  if (name == "white_box") return Threat::white_box;
  if (name == "eot") return Threat::eot;
  throw ConfigError("unknown threat '" + std::string(name) + "' (expected white_box or eot)");
}

AttackConfig fgsm_config(double epsilon) {
  AttackConfig c;
  c.kind = AttackKind::fgsm;
  c.epsilon = epsilon;
  c.step_size = epsilon;
  c.steps = 1;
  return c;
}

AttackConfig pgd_config(double epsilon, std::size_t steps) {
  AttackConfig c;
  c.kind = AttackKind::pgd;
  c.epsilon = epsilon;
  c.steps = steps;
  c.step_size = 2.5 * epsilon / static_cast<double>(steps);
  c.random_start = true;
  return c;
}

AttackConfig cw_pgd_config(double epsilon, std::size_t steps) {
  AttackConfig c = pgd_config(epsilon, steps);
  c.kind = AttackKind::cw_pgd;
  return c;
}

void validate(const AttackConfig& c) {
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ArgumentError("epsilon_attack must lie in [0, 1]");
  if (c.steps == 0) throw ArgumentError("attack steps must be >= 1");
  if (!(c.step_size >= 0.0) || (c.step_size == 0.0 && c.epsilon > 0.0)) {
    throw ArgumentError("attack step_size must be positive");
  }
  if (c.step_size > c.epsilon * (1.0 + 1e-12)) throw ArgumentError("attack step_size must not exceed epsilon");
  if (!(c.kappa >= 0.0)) throw ArgumentError("kappa must be >= 0");
  if (c.eot_samples == 0) throw ArgumentError("eot_samples must be >= 1");
  if (c.kind == AttackKind::fgsm && (c.steps != 1 || c.step_size != c.epsilon || c.random_start)) {
    throw ArgumentError("fgsm is a single step of size epsilon without random start");
  }
}

ModelOracle::ModelOracle(const Model& model) : eval_(model), shape_(model.arch.input_shape()) {}

void ModelOracle::gradient(std::span<const float> x, std::size_t y, LossKind kind, float kappa,
                           std::span<float> out, Rng&) {
  eval_.loss_gradient(x, y, kind, kappa, out);
}

EotOracle::EotOracle(std::span<const Model> members, std::size_t samples, bool exact)
    : samples_(samples), exact_(exact) {
  if (members.empty()) throw ArgumentError("EOT oracle needs a nonempty pool");
  if (samples == 0 && !exact) throw ArgumentError("EOT sample count must be >= 1");
  shape_ = members.front().arch.input_shape();
  for (const Model& m : members) {
    if (m.arch.input_shape() != shape_) throw ShapeError("pool members disagree on input shape");
    evals_.emplace_back(m);
  }
  scratch_.resize(shape_size(shape_));
  counts_.resize(members.size());
}

void EotOracle::gradient(std::span<const float> x, std::size_t y, LossKind kind, float kappa, std::span<float> out,
                         Rng& rng) {
  const std::size_t m = evals_.size();
  std::fill(counts_.begin(), counts_.end(), std::size_t{0});
  if (exact_) {
    std::fill(counts_.begin(), counts_.end(), std::size_t{1});
  } else {
    for (std::size_t s = 0; s < samples_; ++s) ++counts_[uniform_index(rng, m)];
  }
  const float total = exact_ ? static_cast<float>(m) : static_cast<float>(samples_);
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t i = 0; i < m; ++i) {
    if (counts_[i] == 0) continue;
    const float w = static_cast<float>(counts_[i]) / total;
    evals_[i].loss_gradient(x, y, kind, kappa, scratch_);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * scratch_[j];
  }
}

void ConstraintAudit::observe(std::span<const float> x, std::span<const float> x_adv, double epsilon) {
  ++iterates;
  bool ok = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(static_cast<double>(x_adv[i]) - static_cast<double>(x[i]));
    max_perturbation = std::max(max_perturbation, d);
    min_value = std::min(min_value, static_cast<double>(x_adv[i]));
    max_value = std::max(max_value, static_cast<double>(x_adv[i]));
    if (d > epsilon + tolerance || !(x_adv[i] >= 0.0f && x_adv[i] <= 1.0f)) ok = false;
  }
  if (!ok) ++violations;
}

void ConstraintAudit::merge(const ConstraintAudit& other) {
  iterates += other.iterates;
  violations += other.violations;
  max_perturbation = std::max(max_perturbation, other.max_perturbation);
  min_value = std::min(min_value, other.min_value);
  max_value = std::max(max_value, other.max_value);
}

namespace {

void check_input(const GradientOracle& oracle, const Tensor& x) {
  if (x.shape() != oracle.input_shape()) {
    throw ShapeError("attack input shape " + shape_string(x.shape()) + " does not match model input " +
                     shape_string(oracle.input_shape()));
  }
}

}  // namespace

Tensor fgsm(GradientOracle& oracle, const Tensor& x, std::size_t y, double epsilon, Rng& rng) {
  check_input(oracle, x);
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("epsilon_attack must lie in [0, 1]");
  const float eps = static_cast<float>(epsilon);
  std::vector<float> grad(x.size());
  oracle.gradient(x.data(), y, LossKind::ce, 0.0f, grad, rng);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + eps * sign_of(grad[i]), 0.0f, 1.0f);
  return out;
}

Tensor fgsm(GradientOracle& oracle, const Tensor& x, std::size_t y, double epsilon) {
  Rng rng(0);
  return fgsm(oracle, x, y, epsilon, rng);
}

Tensor pgd(GradientOracle& oracle, const Tensor& x, std::size_t y, const AttackConfig& config, Rng& rng,
           ConstraintAudit* audit) {
  validate(config);
  check_input(oracle, x);
  const float eps = static_cast<float>(config.epsilon);
  const float alpha = static_cast<float>(config.step_size);
  const float kappa = static_cast<float>(config.kappa);
  const LossKind loss = config.loss();
  // Cross-entropy is ascended, the margin loss descended.
  const float direction = loss == LossKind::ce ? 1.0f : -1.0f;
  const std::size_t n = x.size();

  std::vector<float> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = x[i] - eps;
    hi[i] = x[i] + eps;
  }
  Tensor adv = x;
  if (config.random_start) {
    for (std::size_t i = 0; i < n; ++i) {
      const float noise = static_cast<float>(uniform(rng, -config.epsilon, config.epsilon));
      adv[i] = std::clamp(x[i] + noise, 0.0f, 1.0f);
    }
    if (audit) audit->observe(x.data(), adv.data(), config.epsilon);
  }
  std::vector<float> grad(n);
  for (std::size_t t = 0; t < config.steps; ++t) {
    oracle.gradient(adv.data(), y, loss, kappa, grad, rng);
    for (std::size_t i = 0; i < n; ++i) {
      float z = adv[i] + alpha * (direction * sign_of(grad[i]));
      z = std::clamp(z, lo[i], hi[i]);
      adv[i] = std::clamp(z, 0.0f, 1.0f);
    }
    if (audit) audit->observe(x.data(), adv.data(), config.epsilon);
  }
  return adv;
}

Tensor run_attack(GradientOracle& oracle, const Tensor& x, std::size_t y, const AttackConfig& config, Rng& rng,
                  ConstraintAudit* audit) {
  if (config.kind == AttackKind::fgsm) {
    validate(config);
    Tensor adv = fgsm(oracle, x, y, config.epsilon, rng);
    if (audit) audit->observe(x.data(), adv.data(), config.epsilon);
    return adv;
  }
  return pgd(oracle, x, y, config, rng, audit);
}

Tensor eot_gradient(std::span<const Model> members, const Tensor& x, std::size_t y, std::size_t n, LossKind kind,
                    Rng& rng, bool exact, float kappa) {
  EotOracle oracle(members, n, exact);
  check_input(oracle, x);
  Tensor g(x.shape());
  oracle.gradient(x.data(), y, kind, kappa, g.data(), rng);
  return g;
}

Rng attack_stream(std::uint64_t attack_seed, std::uint64_t example_id) {
  return derive_stream(attack_seed, "attack", example_id);
}

std::size_t snapshot_member(std::uint64_t attack_seed, std::uint64_t example_id, std::size_t pool_size) {
  Rng rng = derive_stream(attack_seed, "snapshot", example_id);
  return uniform_index(rng, pool_size);
}

AttackBatchResult attack_batch(std::span<const Model> members, const Dataset& slice, const AttackConfig& config,
                               std::size_t workers) {
  validate(config);
  if (members.empty()) throw ArgumentError("attack_batch needs a nonempty pool");
  if (slice.empty()) throw ArgumentError("attack_batch needs a nonempty slice");
  if (slice.image_shape() != members.front().arch.input_shape()) {
    throw ShapeError("slice images " + shape_string(slice.image_shape()) + " do not match model input " +
                     shape_string(members.front().arch.input_shape()));
  }
  const std::size_t n = slice.size();
  const std::size_t stride = slice.image_size();
  workers = std::min(resolve_workers(workers), n);

  struct WorkerState {
    std::vector<std::unique_ptr<ModelOracle>> models;
    std::unique_ptr<EotOracle> eot;
    ConstraintAudit audit;
  };
  std::vector<WorkerState> states(workers);
  for (auto& s : states) s.models.resize(members.size());

  AttackBatchResult result{Tensor(slice.images.shape()), std::vector<std::size_t>(n, 0), {}};
  parallel_for(n, workers, [&](std::size_t i, std::size_t w) {
    WorkerState& st = states[w];
    const std::uint64_t id = slice.ids[i];
    GradientOracle* oracle = nullptr;
    if (config.threat == Threat::white_box) {
      const std::size_t target = snapshot_member(config.seed, id, members.size());
      result.targets[i] = target;
      if (!st.models[target]) st.models[target] = std::make_unique<ModelOracle>(members[target]);
      oracle = st.models[target].get();
    } else {
      if (!st.eot) st.eot = std::make_unique<EotOracle>(members, config.eot_samples);
      oracle = st.eot.get();
    }
    Rng rng = attack_stream(config.seed, id);
    const Tensor adv = run_attack(*oracle, slice.image_tensor(i), slice.labels[i], config, rng, &st.audit);
    std::copy(adv.data().begin(), adv.data().end(), result.adversarial.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  });
  for (const auto& s : states) result.audit.merge(s.audit);
  return result;
}

void save_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  binary::Writer w;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put_bytes(tensor.data().data(), tensor.size() * sizeof(float));
  write_file(path, w.bytes());
}

Tensor load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  binary::Reader r(bytes, "tensor file '" + path.string() + "'");
  const auto rank = r.get<std::uint32_t>();
  if (rank == 0 || rank > 8) throw FormatError("tensor file: invalid rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = r.get<std::uint32_t>();
    if (d == 0) throw FormatError("tensor file: zero dimension");
  }
  const std::size_t count = shape_size(shape);
  if (r.remaining() != count * sizeof(float)) throw FormatError("tensor file: payload length mismatch");
  std::vector<float> data(count);
  r.get_bytes(data.data(), count * sizeof(float));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace advms

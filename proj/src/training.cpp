#include "advms/training.hpp"

#include <bit>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "advms/checkpoint.hpp"
#include "advms/error.hpp"
#include "advms/network.hpp"
#include "advms/rng.hpp"

namespace advms {

double TrainConfig::effective_inner_step() const {
  if (inner_step_size > 0.0) return inner_step_size;
  return 2.5 * epsilon_train / static_cast<double>(inner_steps);
}

std::uint64_t TrainConfig::fingerprint() const {
  std::uint64_t h = hash_string("train-config-v1");
  h = hash_combine(h, epochs);
  h = hash_combine(h, batch_size);
  h = hash_combine(h, std::bit_cast<std::uint64_t>(learning_rate));
  h = hash_combine(h, std::bit_cast<std::uint64_t>(momentum));
  h = hash_combine(h, std::bit_cast<std::uint64_t>(epsilon_train));
  h = hash_combine(h, inner_steps);
  h = hash_combine(h, std::bit_cast<std::uint64_t>(effective_inner_step()));
  return h;
}

void TrainConfig::to_section(IniSection& s) const {
  s.set("epochs", std::to_string(epochs));
  s.set("batch_size", std::to_string(batch_size));
  s.set("learning_rate", format_double(learning_rate));
  s.set("momentum", format_double(momentum));
  s.set("epsilon_train", format_double(epsilon_train));
  s.set("inner_steps", std::to_string(inner_steps));
  s.set("inner_step_size", format_double(effective_inner_step()));
  s.set("seed", std::to_string(seed));
}

void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
  if (!(c.epsilon_train >= 0.0 && c.epsilon_train <= 1.0)) throw ArgumentError("epsilon_train must lie in [0, 1]");
  if (c.inner_steps == 0) throw ArgumentError("inner_steps must be >= 1");
  if (c.inner_step_size < 0.0) throw ArgumentError("inner_step_size must be positive");
  if (c.epsilon_train > 0.0 && c.effective_inner_step() > c.epsilon_train * (1.0 + 1e-12)) {
    throw ArgumentError("inner_step_size must not exceed epsilon_train");
  }
}

namespace {

void check_data(const Architecture& arch, const Dataset& data) {
  if (data.empty()) throw ArgumentError("training needs a nonempty dataset");
  if (data.image_shape() != arch.input_shape()) {
    throw ShapeError("dataset images " + shape_string(data.image_shape()) + " do not match architecture input " +
                     shape_string(arch.input_shape()));
  }
  if (data.num_classes > arch.num_classes()) {
    throw ShapeError("dataset has more classes than the architecture's output layer");
  }
}

Model train(const Architecture& arch, const Dataset& data, const TrainConfig& config, TrainLog* log) {
  validate(config);
  check_data(arch, data);
  Model model = init_params(arch, config.seed);
  model.train_epsilon = config.epsilon_train;
  ParamGrads<float> velocity = zero_grads<float>(arch);

  const bool adversarial = config.epsilon_train > 0.0;
  AttackConfig inner;
  inner.kind = AttackKind::pgd;
  inner.epsilon = config.epsilon_train;
  inner.steps = config.inner_steps;
  inner.step_size = config.effective_inner_step();
  inner.random_start = true;
  // Only drawn from when adversarial, so epsilon = 0 consumes exactly the
  // same randomness as standard training.
  Rng inner_rng = derive_stream(config.seed, "inner-max");

  const float lr = static_cast<float>(config.learning_rate);
  const float mu = static_cast<float>(config.momentum);
  std::vector<Tensor> inputs;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto plan = batches(data.size(), config.batch_size, hash_combine(config.seed, epoch), true);
    double epoch_loss = 0.0;
    for (const auto& batch : plan) {
      ModelOracle oracle(model);
      Evaluator<float>& ev = oracle.evaluator();
      inputs.clear();
      for (std::size_t idx : batch) {
        Tensor x = data.image_tensor(idx);
        if (adversarial) {
          ConstraintAudit audit;
          x = pgd(oracle, x, data.labels[idx], inner, inner_rng, &audit);
          if (audit.violations != 0) throw std::logic_error("inner maximization left the epsilon ball");
          if (log) log->audit.merge(audit);
        }
        inputs.push_back(std::move(x));
      }
      ParamGrads<float> grads = zero_grads<float>(arch);
      const float scale = 1.0f / static_cast<float>(batch.size());
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        batch_loss += ev.loss_gradient(inputs[i].data(), data.labels[batch[i]], LossKind::ce, 0.0f, {}, &grads, scale);
      }
      if (log && log->record_batch_losses) {
        double clean = 0.0;
        for (std::size_t idx : batch) clean += loss_ce<float>(ev.forward(data.image(idx)), data.labels[idx]);
        log->clean_batch_loss.push_back(clean / static_cast<double>(batch.size()));
        log->adversarial_batch_loss.push_back(batch_loss / static_cast<double>(batch.size()));
      }
      epoch_loss += batch_loss;
      for (std::size_t l = 0; l < model.params.size(); ++l) {
        for (int which = 0; which < 2; ++which) {
          auto& p = which == 0 ? model.params[l].weight : model.params[l].bias;
          auto& v = which == 0 ? velocity[l].weight : velocity[l].bias;
          const auto& g = which == 0 ? grads[l].weight : grads[l].bias;
          for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = mu * v[j] + g[j];
            p[j] -= lr * v[j];
          }
        }
      }
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return model;
}

}  // namespace

Model train_standard(const Architecture& arch, const Dataset& data, const TrainConfig& config, TrainLog* log) {
  if (config.epsilon_train != 0.0) throw ArgumentError("train_standard requires epsilon_train = 0");
  return train(arch, data, config, log);
}

Model train_adversarial(const Architecture& arch, const Dataset& data, const TrainConfig& config, TrainLog* log) {
  return train(arch, data, config, log);
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.empty()) throw ArgumentError("accuracy needs a nonempty dataset");
  Evaluator<float> ev(model);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (argmax<float>(ev.forward(data.image(i))) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

CheckpointCache::CheckpointCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::uint64_t CheckpointCache::key(const Architecture& arch, std::uint64_t dataset_fingerprint,
                                   const TrainConfig& config) {
  std::uint64_t h = hash_combine(arch.fingerprint(), dataset_fingerprint);
  h = hash_combine(h, std::bit_cast<std::uint64_t>(config.epsilon_train));
  h = hash_combine(h, config.seed);
  return hash_combine(h, config.fingerprint());
}

std::filesystem::path CheckpointCache::path_for(std::uint64_t key) const {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.ckpt", static_cast<unsigned long long>(key));
  return dir_ / name;
}

Model CheckpointCache::get_or_train(const Architecture& arch, const Dataset& data, std::uint64_t dataset_fingerprint,
                                    const TrainConfig& config, bool* hit) {
  const auto path = path_for(key(arch, dataset_fingerprint, config));
  if (std::filesystem::exists(path)) {
    Model m = load_model(path);
    if (m.arch == arch && m.init_seed == config.seed && m.train_epsilon == config.epsilon_train) {
      if (hit) *hit = true;
      return m;
    }
  }
  if (hit) *hit = false;
  Model m = train_adversarial(arch, data, config);
  save_model(m, path);
  return m;
}

}  // namespace advms

#include "advms/switching.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <string>

#include "advms/attacks.hpp"
#include "advms/checkpoint.hpp"
#include "advms/error.hpp"
#include "advms/file_util.hpp"
#include "advms/ini.hpp"
#include "advms/network.hpp"
#include "advms/parallel.hpp"

namespace advms {

std::uint64_t member_seed(std::uint64_t master_seed, std::size_t index) {
  return hash_combine(hash_combine(master_seed, hash_string("pool-member")), index);
}

SwitchingPool::SwitchingPool(std::vector<Model> models, std::uint64_t master_seed)
    : models_(std::move(models)), master_seed_(master_seed) {
  if (models_.empty()) throw ArgumentError("a switching pool needs at least one member");
  std::set<std::uint64_t> seeds;
  for (const Model& m : models_) {
    validate_params(m);
    if (!(m.arch == models_.front().arch)) throw ArgumentError("pool members must share one architecture");
    if (m.train_epsilon != models_.front().train_epsilon) {
      throw ArgumentError("pool members must share one epsilon_train");
    }
    if (!seeds.insert(m.init_seed).second) throw ArgumentError("pool member init seeds must be distinct");
  }
}

SwitchingPool SwitchingPool::prefix(std::size_t m) const {
  if (m == 0 || m > models_.size()) throw ArgumentError("pool prefix size out of range");
  return SwitchingPool(std::vector<Model>(models_.begin(), models_.begin() + static_cast<std::ptrdiff_t>(m)),
                       master_seed_);
}

SwitchingPool build_pool(const Architecture& arch, const Dataset& data, std::size_t m, const TrainConfig& config,
                         std::uint64_t master_seed, const BuildOptions& options) {
  if (m < 1) throw ArgumentError("pool size M must be >= 1");
  validate(config);
  const std::uint64_t data_fp = options.cache ? data.fingerprint() : 0;
  std::vector<std::optional<Model>> trained(m);
  parallel_for(m, options.workers, [&](std::size_t i, std::size_t) {
    TrainConfig member_config = config;
    member_config.seed = member_seed(master_seed, i + 1);
    bool hit = false;
    trained[i] = options.cache ? options.cache->get_or_train(arch, data, data_fp, member_config, &hit)
                               : train_adversarial(arch, data, member_config);
    if (options.on_member) options.on_member(i, *trained[i], hit);
  });
  std::vector<Model> models;
  for (auto& t : trained) models.push_back(std::move(*t));
  return SwitchingPool(std::move(models), master_seed);
}

std::size_t activate(const SwitchingPool& pool, Rng& rng) { return uniform_index(rng, pool.size()); }

std::size_t predict(const SwitchingPool& pool, const Tensor& x, Rng& rng) {
  return predict_class(pool.member(activate(pool, rng)), x);
}

std::uint64_t pool_memory_bytes(const SwitchingPool& pool) {
  return static_cast<std::uint64_t>(pool.size()) * pool.member(0).parameter_count() * sizeof(float);
}

Tensor eot_gradient(const SwitchingPool& pool, const Tensor& x, std::size_t y, std::size_t n, LossKind kind,
                    Rng& rng, bool exact) {
  return eot_gradient(pool.members(), x, y, n, kind, rng, exact);
}

namespace {

std::string architecture_spec(const Architecture& arch) {
  const Volume& in = arch.input();
  return std::string(to_string(arch.id())) + " " + std::to_string(in.c) + "x" + std::to_string(in.h) + "x" +
         std::to_string(in.w) + " classes=" + std::to_string(arch.num_classes());
}

}  // namespace

void save_pool_manifest(const SwitchingPool& pool, const std::filesystem::path& manifest,
                        std::span<const std::filesystem::path> member_paths) {
  if (member_paths.size() != pool.size()) throw ArgumentError("need one checkpoint path per pool member");
  IniDocument doc;
  auto& s = doc.add("pool");
  s.set("architecture", std::string(to_string(pool.arch().id())));
  s.set("architecture_spec", architecture_spec(pool.arch()));
  s.set("M", std::to_string(pool.size()));
  s.set("epsilon_train", format_double(pool.epsilon_train()));
  s.set("master_seed", std::to_string(pool.master_seed()));
  s.set("memory_bytes", std::to_string(pool_memory_bytes(pool)));
  const auto base = manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::filesystem::path p = member_paths[i];
    auto rel = p.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") p = rel;
    auto& m = doc.add("member");
    m.set("index", std::to_string(i + 1));
    m.set("init_seed", std::to_string(pool.member(i).init_seed));
    m.set("checkpoint", p.generic_string());
    m.set("sha", file_hash(member_paths[i]));
  }
  write_text(manifest, doc.to_string());
}

SwitchingPool load_pool_manifest(const std::filesystem::path& manifest) {
  const auto doc = IniDocument::parse(read_text(manifest), manifest.string());
  const IniSection* pool = doc.find("pool");
  if (!pool) throw FormatError("pool manifest '" + manifest.string() + "' has no [pool] section");
  auto need = [&](const IniSection& s, std::string_view key) -> const std::string& {
    const IniEntry* e = s.find(key);
    if (!e) throw FormatError("pool manifest: missing key '" + std::string(key) + "' in [" + s.name + "]");
    return e->value;
  };
  const auto id = parse_dataset_id(need(*pool, "architecture"));
  const std::size_t m = parse_u64(need(*pool, "M"), "pool.M");
  const double eps = parse_real(need(*pool, "epsilon_train"), "pool.epsilon_train");
  const std::uint64_t master = parse_u64(need(*pool, "master_seed"), "pool.master_seed");
  const auto members = doc.find_all("member");
  if (members.size() != m) {
    throw FormatError("pool manifest declares M = " + std::to_string(m) + " but lists " +
                      std::to_string(members.size()) + " members");
  }
  const auto base = manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");
  std::vector<Model> models;
  for (const IniSection* s : members) {
    std::filesystem::path p = need(*s, "checkpoint");
    if (p.is_relative()) p = base / p;
    Model model = load_model(p);
    if (model.arch.id() != id) throw FormatError("pool member '" + p.string() + "' has a different architecture");
    if (model.train_epsilon != eps) throw FormatError("pool member '" + p.string() + "' has a different epsilon_train");
    if (const IniEntry* seed = s->find("init_seed"); seed && parse_u64(seed->value, "member.init_seed") != model.init_seed) {
      throw FormatError("pool member '" + p.string() + "' init seed does not match the manifest");
    }
    models.push_back(std::move(model));
  }
  try {
    return SwitchingPool(std::move(models), master);
  } catch (const ArgumentError& e) {
    throw FormatError("pool manifest '" + manifest.string() + "': " + e.what());
  }
}

}  // namespace advms

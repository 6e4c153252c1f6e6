#include "advms/checkpoint.hpp"

#include <array>
#include <cstring>

#include "advms/binary_io.hpp"
#include "advms/error.hpp"
#include "advms/file_util.hpp"

namespace advms {
namespace {

constexpr std::array<unsigned char, 6> kMagic = {'A', 'D', 'V', 'M', 'S', 0x01};

void put_tensor(binary::Writer& w, const Tensor& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put_bytes(t.data().data(), t.size() * sizeof(float));
}

Tensor get_tensor(binary::Reader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank == 0 || rank > 8) throw FormatError("checkpoint: invalid tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = r.get<std::uint32_t>();
    if (d == 0) throw FormatError("checkpoint: zero tensor dimension");
    count *= d;
  }
  if (count * sizeof(float) > r.remaining()) throw FormatError("checkpoint: truncated tensor data");
  std::vector<float> data(count);
  r.get_bytes(data.data(), count * sizeof(float));
  return Tensor(std::move(shape), std::move(data));
}

/// The synthetic toy net is parameterized by channels, classes and image
/// side; recover them from the stored tensor shapes (conv, dense, output).
Architecture infer_synthetic(const std::vector<Tensor>& tensors) {
  if (tensors.size() != 6 || tensors[0].rank() != 4 || tensors[2].rank() != 2 || tensors[5].rank() != 1) {
    throw FormatError("checkpoint: tensors do not describe the synthetic architecture");
  }
  const std::size_t filters = tensors[0].dim(0);
  const std::size_t flat = tensors[2].dim(1);
  if (filters == 0 || flat % filters != 0) throw FormatError("checkpoint: inconsistent synthetic dense layer");
  std::size_t pooled = 0;
  while ((pooled + 1) * (pooled + 1) <= flat / filters) ++pooled;
  if (pooled * pooled * filters != flat) throw FormatError("checkpoint: inconsistent synthetic dense layer");
  SyntheticShape shape{2 * pooled + 2, tensors[5].dim(0), tensors[0].dim(1)};
  try {
    return build_architecture(DatasetId::synthetic, shape);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  validate_params(model);
  binary::Writer w;
  w.put_bytes(kMagic.data(), kMagic.size());
  w.put<std::uint8_t>(static_cast<std::uint8_t>(model.arch.id()));
  w.put<double>(model.train_epsilon);
  w.put<std::uint64_t>(model.init_seed);
  for (const auto& p : model.params) {
    put_tensor(w, p.weight);
    put_tensor(w, p.bias);
  }
  write_file(path, w.bytes());
}

Model load_model(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  binary::Reader r(bytes, "checkpoint '" + path.string() + "'");
  std::array<unsigned char, 6> magic{};
  r.get_bytes(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError("checkpoint '" + path.string() + "': bad magic or version");
  const auto id_byte = r.get<std::uint8_t>();
  if (id_byte > static_cast<std::uint8_t>(DatasetId::synthetic)) {
    throw FormatError("checkpoint: unknown architecture id " + std::to_string(id_byte));
  }
  const auto id = static_cast<DatasetId>(id_byte);
  const double eps = r.get<double>();
  const auto seed = r.get<std::uint64_t>();
  std::vector<Tensor> tensors;
  while (!r.done()) tensors.push_back(get_tensor(r));

  Architecture arch = id == DatasetId::synthetic ? infer_synthetic(tensors) : build_architecture(id);
  Model model{arch, {}, seed, eps};
  if (tensors.size() % 2 != 0) throw FormatError("checkpoint: odd number of parameter tensors");
  for (std::size_t i = 0; i < tensors.size(); i += 2) {
    model.params.push_back({std::move(tensors[i]), std::move(tensors[i + 1])});
  }
  try {
    validate_params(model);
  } catch (const ShapeError& e) {
    throw FormatError("checkpoint '" + path.string() + "': " + e.what());
  }
  return model;
}

}  // namespace advms

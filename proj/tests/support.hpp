#pragma once

#include <filesystem>
#include <string>

#include "advms/architecture.hpp"
#include "advms/dataset.hpp"
#include "advms/model.hpp"
#include "advms/rng.hpp"
#include "advms/tensor.hpp"

namespace advms::testing {

inline Architecture tiny_arch(std::size_t classes = 3) {
  SyntheticShape s;
  s.side = 8;
  s.num_classes = classes;
  return build_architecture(DatasetId::synthetic, s);
}

inline Tensor random_image(const Shape& shape, std::uint64_t seed) {
  Tensor x(shape);
  Rng rng = derive_stream(seed, "test-image");
  for (auto& v : x.data()) v = static_cast<float>(uniform01(rng));
  return x;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("advms-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace advms::testing

#pragma once

#include <filesystem>

#include "advms/model.hpp"

namespace advms {

/// Binary checkpoint: "ADVMS\x01", architecture id byte, train_epsilon
/// (f64 LE), init_seed (u64 LE), then every weight and bias tensor in chain
/// order as u32 LE rank, u32 LE dims, f32 LE values.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace advms

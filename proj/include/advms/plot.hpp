#pragma once

#include <filesystem>
#include <string>

#include "advms/evaluation.hpp"

namespace advms {

/// ASR against epsilon_attack, one polyline per (M, epsilon_train, attack,
/// threat). Rows with undefined ASR are skipped. Values are averaged over
/// master seeds.
std::string asr_vs_epsilon_svg(const EvalReport& report);

/// ASR against clean accuracy, one polyline per M through its
/// epsilon_train points, averaged over master seeds and attacks.
std::string tradeoff_svg(const EvalReport& report);

void write_plots(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace advms

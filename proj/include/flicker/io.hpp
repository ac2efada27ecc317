// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "flicker/attack.hpp"
#include "flicker/camera.hpp"

namespace flicker {

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, const std::string& text);

nlohmann::json timings_to_json(const CameraTimings& timings);
CameraTimings timings_from_json(const nlohmann::json& doc);

/// Signal document: timings, channel count and c arrays of l values, each
/// written with 17 significant digits.
std::string signal_to_text(const LightSignal& signal);
LightSignal signal_from_json(const nlohmann::json& doc);
LightSignal parse_signal(const std::string& text);
void save_signal(const std::filesystem::path& path, const LightSignal& signal);
LightSignal load_signal(const std::filesystem::path& path);

std::string bank_to_text(const SignalBank& bank);
SignalBank parse_bank(const std::string& text);
void save_bank(const std::filesystem::path& path, const SignalBank& bank);
SignalBank load_bank(const std::filesystem::path& path);

}  // namespace flicker

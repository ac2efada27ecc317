// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flicker/camera.hpp"

namespace flicker {

enum class PwmLevel : std::uint8_t { kOff = 0, kOn = 1 };

/// One write on the shared timeline: every channel in `channel_mask`
/// (bit c = channel c) switches to `level` at `offset_us` into the slot.
struct PwmEvent {
  double offset_us = 0.0;
  std::uint8_t channel_mask = 0;
  PwmLevel level = PwmLevel::kOff;

  bool operator==(const PwmEvent&) const = default;
};

struct PwmSlot {
  std::vector<PwmEvent> events;
  /// Channels that stay on through the end of this slot into the next one.
  std::uint8_t carry_mask = 0;

  bool operator==(const PwmSlot&) const = default;
};

struct PwmSchedule {
  static constexpr int kChannels = 3;
  static constexpr int kFormatVersion = 1;

  double slot_us = 120.0;
  double grid_us = 4.0;
  std::vector<PwmSlot> slots;

  double period_us() const { return slot_us * static_cast<double>(slots.size()); }
  /// Throws Error("invalid_schedule") on ordering, grid or pairing violations.
  void validate() const;

  bool operator==(const PwmSchedule&) const = default;
};

/// Nearest multiple of grid_us, ties away from zero.
double quantize_to_grid(double us, double grid_us);

/// Duty per slot and channel = signal value. Channel on at 0 and off at the
/// quantized on-time; full-slot channels carry into a following full slot.
PwmSchedule compile(const ChannelMatrix& signal, double slot_us = 120.0, double grid_us = 4.0);
PwmSchedule compile(const LightSignal& signal, double slot_us = 120.0, double grid_us = 4.0);

/// On-time per slot and channel at 1 us resolution, divided by slot_us.
ChannelMatrix simulate(const PwmSchedule& schedule);

/// C include with integer array literals. Times are emitted in nanoseconds.
std::string export_firmware(const PwmSchedule& schedule);
PwmSchedule parse_firmware(const std::string& text);

std::string export_schedule_doc(const PwmSchedule& schedule);
PwmSchedule parse_schedule_doc(const std::string& text);

}  // namespace flicker

// SPDX-License-Identifier: Apache-2.0
#include "flicker/pwmc.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "flicker/error.hpp"

namespace flicker {

namespace {

constexpr double kEps = 1e-9;

bool on_grid(double us, double grid) {
  const double k = us / grid;
  return std::abs(k - std::round(k)) < 1e-9 * std::max(1.0, std::abs(k));
}

void sort_events(std::vector<PwmEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const PwmEvent& a, const PwmEvent& b) {
    if (a.offset_us != b.offset_us) return a.offset_us < b.offset_us;
    return a.level < b.level;
  });
}

void add_event(std::vector<PwmEvent>& events, double offset, int channel, PwmLevel level) {
  for (PwmEvent& e : events) {
    if (e.offset_us == offset && e.level == level) {
      e.channel_mask |= static_cast<std::uint8_t>(1u << channel);
      return;
    }
  }
  events.push_back({offset, static_cast<std::uint8_t>(1u << channel), level});
}

}  // namespace

double quantize_to_grid(double us, double grid_us) {
  require(grid_us > 0.0, "invalid_schedule", "grid_us must be > 0");
  return std::round(us / grid_us) * grid_us;  // std::round: halves away from zero
}

void PwmSchedule::validate() const {
  require(std::isfinite(slot_us) && std::isfinite(grid_us) && grid_us > 0.0 && slot_us >= grid_us,
          "invalid_schedule", "schedule needs slot_us >= grid_us > 0");
  std::uint8_t carried = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const PwmSlot& slot = slots[i];
    const std::string where = fmt::format("slot {}", i);
    require(slot.carry_mask < 8, "invalid_schedule", where + ": carry mask has unknown channels");
    require(i + 1 < slots.size() || slot.carry_mask == 0, "invalid_schedule",
            where + ": last slot cannot carry");
    std::uint8_t state = carried;
    std::array<int, kChannels> ons{}, offs{};
    double prev = -1.0;
    for (const PwmEvent& e : slot.events) {
      require(e.channel_mask != 0 && e.channel_mask < 8, "invalid_schedule",
              where + ": event channel mask must name channels 0..2");
      require(e.level == PwmLevel::kOn || e.level == PwmLevel::kOff, "invalid_schedule",
              where + ": unknown event level");
      require(e.offset_us >= 0.0 && e.offset_us <= slot_us + kEps, "invalid_schedule",
              where + ": event offset outside [0, slot_us]");
      require(on_grid(e.offset_us, grid_us) || std::abs(e.offset_us - slot_us) < kEps,
              "invalid_schedule", where + ": event offset off the grid");
      require(e.offset_us >= prev, "invalid_schedule", where + ": events not sorted by offset");
      prev = e.offset_us;
      for (int c = 0; c < kChannels; ++c) {
        if (!(e.channel_mask & (1u << c))) continue;
        const std::uint8_t bit = static_cast<std::uint8_t>(1u << c);
        if (e.level == PwmLevel::kOn) {
          require(!(state & bit) && ++ons[c] == 1, "invalid_schedule",
                  where + ": redundant or repeated on event");
          state |= bit;
        } else {
          require((state & bit) && ++offs[c] == 1, "invalid_schedule",
                  where + ": off event without a preceding on");
          state &= static_cast<std::uint8_t>(~bit);
        }
      }
    }
    require(state == slot.carry_mask, "invalid_schedule",
            where + ": channels left on must be exactly the carried ones");
    carried = slot.carry_mask;
  }
}

PwmSchedule compile(const ChannelMatrix& signal, double slot_us, double grid_us) {
  require(std::isfinite(slot_us) && std::isfinite(grid_us) && grid_us > 0.0 && slot_us >= grid_us,
          "invalid_schedule", "compile needs slot_us >= grid_us > 0");
  require(signal.channels == PwmSchedule::kChannels, "invalid_signal",
          "PWM compilation needs a 3-channel signal");
  PwmSchedule schedule;
  schedule.slot_us = slot_us;
  schedule.grid_us = grid_us;
  schedule.slots.resize(static_cast<std::size_t>(signal.length));

  auto on_time = [&](int c, int i) {
    const double d = signal.at(c, i);
    require(d >= 0.0 && d <= 1.0, "invalid_signal", "signal values must lie in [0,1]");
    return std::min(slot_us, quantize_to_grid(d * slot_us, grid_us));
  };
  auto full = [&](int c, int i) { return i < signal.length && on_time(c, i) >= slot_us; };

  for (int i = 0; i < signal.length; ++i) {
    PwmSlot& slot = schedule.slots[i];
    for (int c = 0; c < PwmSchedule::kChannels; ++c) {
      const double t = on_time(c, i);
      if (t <= 0.0) continue;
      const bool carried_in = i > 0 && full(c, i - 1) && t >= slot_us;
      if (!carried_in) add_event(slot.events, 0.0, c, PwmLevel::kOn);
      if (t >= slot_us && full(c, i + 1)) {
        slot.carry_mask |= static_cast<std::uint8_t>(1u << c);
      } else {
        add_event(slot.events, t, c, PwmLevel::kOff);
      }
    }
    sort_events(slot.events);
  }
  return schedule;
}

PwmSchedule compile(const LightSignal& signal, double slot_us, double grid_us) {
  return compile(signal.values(), slot_us, grid_us);
}

ChannelMatrix simulate(const PwmSchedule& schedule) {
  schedule.validate();
  const int n = static_cast<int>(schedule.slots.size());
  ChannelMatrix out(PwmSchedule::kChannels, n);
  const int ticks = static_cast<int>(std::ceil(schedule.slot_us - kEps));
  std::uint8_t state = 0;
  for (int i = 0; i < n; ++i) {
    const auto& events = schedule.slots[i].events;
    std::size_t next = 0;
    std::array<int, PwmSchedule::kChannels> on{};
    for (int t = 0; t < ticks; ++t) {
      const double mid = std::min(t + 0.5, schedule.slot_us);
      while (next < events.size() && events[next].offset_us <= mid) {
        if (events[next].level == PwmLevel::kOn) {
          state |= events[next].channel_mask;
        } else {
          state &= static_cast<std::uint8_t>(~events[next].channel_mask);
        }
        ++next;
      }
      for (int c = 0; c < PwmSchedule::kChannels; ++c) on[c] += (state >> c) & 1;
    }
    for (int c = 0; c < PwmSchedule::kChannels; ++c) {
      out.at(c, i) = std::min(1.0, on[c] / schedule.slot_us);
    }
    state = schedule.slots[i].carry_mask;
  }
  return out;
}

std::string export_firmware(const PwmSchedule& schedule) {
  schedule.validate();
  auto ns = [](double us) { return static_cast<long long>(std::llround(us * 1000.0)); };
  std::vector<std::string> start, offset, mask, level, carry;
  std::size_t count = 0;
  for (const PwmSlot& slot : schedule.slots) {
    start.push_back(std::to_string(count));
    carry.push_back(std::to_string(slot.carry_mask));
    for (const PwmEvent& e : slot.events) {
      offset.push_back(std::to_string(ns(e.offset_us)));
      mask.push_back(std::to_string(e.channel_mask));
      level.push_back(std::to_string(static_cast<int>(e.level)));
      ++count;
    }
  }
  start.push_back(std::to_string(count));
  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      s += (i == 0 ? "" : (i % 16 == 0 ? ",\n  " : ", ")) + v[i];
    }
    return v.empty() ? std::string("  ") : "  " + s;
  };
  std::string out;
  out += "/* flicker PWM schedule. Generated file. */\n";
  out += "#ifndef FLICKER_PWM_SCHEDULE_H\n#define FLICKER_PWM_SCHEDULE_H\n\n#include <stdint.h>\n\n";
  out += fmt::format("#define FLICKER_PWM_FORMAT_VERSION {}\n", PwmSchedule::kFormatVersion);
  out += fmt::format("#define FLICKER_PWM_SLOT_NS {}\n", ns(schedule.slot_us));
  out += fmt::format("#define FLICKER_PWM_GRID_NS {}\n", ns(schedule.grid_us));
  out += fmt::format("#define FLICKER_PWM_SLOT_COUNT {}\n", schedule.slots.size());
  out += fmt::format("#define FLICKER_PWM_PERIOD_NS {}\n", ns(schedule.period_us()));
  out += fmt::format("#define FLICKER_PWM_EVENT_COUNT {}\n\n", count);
  // Zero-length arrays are not valid C; pad to one element.
  auto array = [&](const char* type, const char* name, const std::vector<std::string>& v) {
    return fmt::format("static const {} {}[{}] = {{\n{}\n}};\n", type, name,
                       std::max<std::size_t>(1, v.size()), v.empty() ? "  0" : list(v));
  };
  out += array("uint32_t", "flicker_pwm_slot_start", start);
  out += array("uint8_t", "flicker_pwm_slot_carry", carry);
  out += array("uint32_t", "flicker_pwm_event_offset_ns", offset);
  out += array("uint8_t", "flicker_pwm_event_channels", mask);
  out += array("uint8_t", "flicker_pwm_event_level", level);
  out += "\n#endif\n";
  return out;
}

PwmSchedule parse_firmware(const std::string& text) {
  auto define = [&](const std::string& name) {
    std::smatch m;
    const std::regex re("#define " + name + " (\\d+)");
    require(std::regex_search(text, m, re), "parse", "firmware file lacks " + name);
    return std::stoll(m[1]);
  };
  auto values = [&](const std::string& name, std::size_t count) {
    std::smatch m;
    const std::regex re(name + "\\[\\d+\\] = \\{([^}]*)\\}");
    require(std::regex_search(text, m, re), "parse", "firmware file lacks array " + name);
    std::vector<long long> v;
    std::stringstream ss(m[1].str());
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(std::stoll(item));
    require(v.size() == std::max<std::size_t>(1, count), "parse",
            "array " + name + " has the wrong length");
    v.resize(count);
    return v;
  };
  require(define("FLICKER_PWM_FORMAT_VERSION") == PwmSchedule::kFormatVersion, "parse",
          "unsupported firmware schedule version");
  PwmSchedule s;
  s.slot_us = define("FLICKER_PWM_SLOT_NS") / 1000.0;
  s.grid_us = define("FLICKER_PWM_GRID_NS") / 1000.0;
  const auto slots = static_cast<std::size_t>(define("FLICKER_PWM_SLOT_COUNT"));
  const auto events = static_cast<std::size_t>(define("FLICKER_PWM_EVENT_COUNT"));
  const auto start = values("flicker_pwm_slot_start", slots + 1);
  const auto carry = values("flicker_pwm_slot_carry", slots);
  const auto offset = values("flicker_pwm_event_offset_ns", events);
  const auto mask = values("flicker_pwm_event_channels", events);
  const auto level = values("flicker_pwm_event_level", events);
  s.slots.resize(slots);
  for (std::size_t i = 0; i < slots; ++i) {
    require(start[i] <= start[i + 1] && start[i + 1] <= static_cast<long long>(events), "parse",
            "slot start table is not monotone");
    s.slots[i].carry_mask = static_cast<std::uint8_t>(carry[i]);
    for (long long k = start[i]; k < start[i + 1]; ++k) {
      s.slots[i].events.push_back({offset[k] / 1000.0, static_cast<std::uint8_t>(mask[k]),
                                   static_cast<PwmLevel>(level[k])});
    }
  }
  s.validate();
  return s;
}

std::string export_schedule_doc(const PwmSchedule& schedule) {
  schedule.validate();
  nlohmann::ordered_json slots = nlohmann::ordered_json::array();
  for (const PwmSlot& slot : schedule.slots) {
    nlohmann::ordered_json events = nlohmann::ordered_json::array();
    for (const PwmEvent& e : slot.events) {
      events.push_back({{"offset_us", e.offset_us},
                        {"channels", e.channel_mask},
                        {"level", e.level == PwmLevel::kOn ? "on" : "off"}});
    }
    slots.push_back({{"events", events}, {"carry", slot.carry_mask}});
  }
  nlohmann::ordered_json doc{{"format", "flicker-pwm-schedule"},
                             {"version", PwmSchedule::kFormatVersion},
                             {"slot_us", schedule.slot_us},
                             {"grid_us", schedule.grid_us},
                             {"slots", slots}};
  return doc.dump(2) + "\n";
}

PwmSchedule parse_schedule_doc(const std::string& text) {
  PwmSchedule s;
  try {
    const auto doc = nlohmann::json::parse(text);
    require(doc.at("format") == "flicker-pwm-schedule", "parse", "not a PWM schedule document");
    require(doc.at("version") == PwmSchedule::kFormatVersion, "parse",
            "unsupported PWM schedule version");
    s.slot_us = doc.at("slot_us");
    s.grid_us = doc.at("grid_us");
    for (const auto& js : doc.at("slots")) {
      PwmSlot slot;
      slot.carry_mask = js.at("carry");
      for (const auto& je : js.at("events")) {
        const std::string level = je.at("level");
        require(level == "on" || level == "off", "parse", "event level must be on or off");
        slot.events.push_back({je.at("offset_us").get<double>(), je.at("channels").get<std::uint8_t>(),
                               level == "on" ? PwmLevel::kOn : PwmLevel::kOff});
      }
      s.slots.push_back(std::move(slot));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse", std::string("malformed PWM schedule: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace flicker

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "flicker/error.hpp"
#include "flicker/pwmc.hpp"

using namespace flicker;

namespace {

ChannelMatrix duties(std::vector<std::array<double, 3>> slots) {
  ChannelMatrix m(3, static_cast<int>(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i)
    for (int c = 0; c < 3; ++c) m.at(c, static_cast<int>(i)) = slots[i][c];
  return m;
}

PwmSchedule random_schedule(Rng& rng) {
  const int slots = uniform_int(rng, 0, 12);
  ChannelMatrix m(3, slots);
  for (double& v : m.data) {
    const int kind = uniform_int(rng, 0, 3);
    v = kind == 0 ? 0.0 : kind == 1 ? 1.0 : uniform(rng, 0.0, 1.0);
  }
  const double grid = uniform_int(rng, 1, 8);
  const double slot = grid * uniform_int(rng, 1, 40);
  return compile(m, slot, grid);
}

}  // namespace

TEST(Quantize, TiesAwayFromZero) {
  EXPECT_EQ(quantize_to_grid(30, 4), 32);
  EXPECT_EQ(quantize_to_grid(29.9, 4), 28);
  EXPECT_EQ(quantize_to_grid(60, 4), 60);
  EXPECT_EQ(quantize_to_grid(2, 4), 4);
  EXPECT_EQ(quantize_to_grid(-2, 4), -4);
}

TEST(Compile, ZeroDutyIsEmpty) {
  const PwmSchedule s = compile(duties({{0, 0, 0}}));
  ASSERT_EQ(s.slots.size(), 1u);
  EXPECT_TRUE(s.slots[0].events.empty());
  EXPECT_EQ(s.slots[0].carry_mask, 0);
}

TEST(Compile, FullDutyOnAtZeroOffAtEnd) {
  const PwmSchedule s = compile(duties({{1, 1, 1}}));
  ASSERT_EQ(s.slots[0].events.size(), 2u);
  EXPECT_EQ(s.slots[0].events[0], (PwmEvent{0.0, 7, PwmLevel::kOn}));
  EXPECT_EQ(s.slots[0].events[1], (PwmEvent{120.0, 7, PwmLevel::kOff}));
}

TEST(Compile, MixedDutiesExample) {
  const PwmSchedule s = compile(duties({{0.5, 0.25, 1.0}}), 120, 4);
  const auto& ev = s.slots[0].events;
  ASSERT_EQ(ev.size(), 4u);
  EXPECT_EQ(ev[0], (PwmEvent{0.0, 7, PwmLevel::kOn}));
  EXPECT_EQ(ev[1], (PwmEvent{32.0, 2, PwmLevel::kOff}));
  EXPECT_EQ(ev[2], (PwmEvent{60.0, 1, PwmLevel::kOff}));
  EXPECT_EQ(ev[3], (PwmEvent{120.0, 4, PwmLevel::kOff}));
}

TEST(Compile, FullDutyCarriesWithoutToggles) {
  const PwmSchedule s = compile(duties({{1, 0.5, 0}, {1, 1, 0}, {1, 1, 0}, {0.5, 0, 0}}));
  EXPECT_EQ(s.slots[0].carry_mask, 1);
  EXPECT_EQ(s.slots[1].carry_mask, 3);
  EXPECT_EQ(s.slots[2].carry_mask, 0);
  // Slot 1: channel 0 carried in (no events), channel 1 switches on and carries out.
  ASSERT_EQ(s.slots[1].events.size(), 1u);
  EXPECT_EQ(s.slots[1].events[0], (PwmEvent{0.0, 2, PwmLevel::kOn}));
  // Slot 2: both carried in, both switched off at the end.
  ASSERT_EQ(s.slots[2].events.size(), 1u);
  EXPECT_EQ(s.slots[2].events[0], (PwmEvent{120.0, 3, PwmLevel::kOff}));
  const ChannelMatrix back = simulate(s);
  EXPECT_EQ(back.at(0, 1), 1.0);
  EXPECT_EQ(back.at(1, 2), 1.0);
  EXPECT_EQ(back.at(0, 3), 0.5);
  // No carry across the wrap from the last slot to the first.
  EXPECT_EQ(compile(duties({{1, 1, 1}, {1, 1, 1}})).slots.back().carry_mask, 0);
}

TEST(Compile, RejectsBadGrid) {
  EXPECT_THROW(compile(duties({{0.5, 0.5, 0.5}}), 3, 4), Error);
  EXPECT_THROW(compile(duties({{0.5, 0.5, 0.5}}), 120, 0), Error);
  EXPECT_THROW(compile(duties({{1.5, 0.5, 0.5}})), Error);
}

TEST(Simulate, ExactEndpoints) {
  const ChannelMatrix z = simulate(compile(duties({{0, 0, 0}, {0, 0, 0}})));
  for (double v : z.data) EXPECT_EQ(v, 0.0);
  const ChannelMatrix o = simulate(compile(duties({{1, 1, 1}, {1, 1, 1}})));
  for (double v : o.data) EXPECT_EQ(v, 1.0);
}

TEST(Simulate, RoundTripBoundProperty) {
  Rng rng = make_rng(91);
  const double bound = 4.0 / (2 * 120.0) + 1.0 / 120.0;
  ChannelMatrix m(3, 3334);
  for (double& v : m.data) v = uniform(rng, 0.0, 1.0);
  const ChannelMatrix back = simulate(compile(m));
  for (std::size_t i = 0; i < m.data.size(); ++i) EXPECT_LE(std::abs(back.data[i] - m.data[i]), bound);
}

TEST(Simulate, IdentityOnGridAlignedDuties) {
  Rng rng = make_rng(92);
  ChannelMatrix m(3, 200);
  for (double& v : m.data) v = uniform_int(rng, 0, 30) * 4.0 / 120.0;
  const ChannelMatrix back = simulate(compile(m));
  for (std::size_t i = 0; i < m.data.size(); ++i) EXPECT_NEAR(back.data[i], m.data[i], 1e-12);
}

TEST(Simulate, RejectsMalformedSchedules) {
  PwmSchedule s = compile(duties({{0.5, 0.25, 0}}));
  std::swap(s.slots[0].events[1], s.slots[0].events[2]);
  EXPECT_THROW(simulate(s), Error);
  s = compile(duties({{0.5, 0, 0}}));
  s.slots[0].events.pop_back();  // on without off
  EXPECT_THROW(simulate(s), Error);
  s = compile(duties({{0.5, 0, 0}}));
  s.slots[0].events[1].offset_us = 61;  // off grid
  EXPECT_THROW(simulate(s), Error);
  s = compile(duties({{0.5, 0, 0}}));
  s.slots[0].events[1].level = PwmLevel::kOn;  // repeated on
  EXPECT_THROW(simulate(s), Error);
}

TEST(Schedule, EventBudgetAndSpacingProperty) {
  Rng rng = make_rng(93);
  for (int i = 0; i < 300; ++i) {
    const PwmSchedule s = random_schedule(rng);
    for (const PwmSlot& slot : s.slots) {
      int toggles = 0;
      for (const PwmEvent& e : slot.events) toggles += std::popcount(unsigned(e.channel_mask));
      EXPECT_LE(toggles, 6);
      for (std::size_t k = 1; k < slot.events.size(); ++k) {
        const double gap = slot.events[k].offset_us - slot.events[k - 1].offset_us;
        EXPECT_TRUE(gap == 0.0 || gap >= s.grid_us - 1e-9);
      }
    }
  }
}

TEST(Firmware, EmptyScheduleConstants) {
  PwmSchedule s;
  const std::string text = export_firmware(s);
  EXPECT_NE(text.find("#define FLICKER_PWM_SLOT_COUNT 0"), std::string::npos);
  EXPECT_NE(text.find("#define FLICKER_PWM_EVENT_COUNT 0"), std::string::npos);
  EXPECT_NE(text.find("#define FLICKER_PWM_SLOT_NS 120000"), std::string::npos);
  EXPECT_NE(text.find("#define FLICKER_PWM_GRID_NS 4000"), std::string::npos);
  EXPECT_EQ(parse_firmware(text), s);
}

TEST(Firmware, OneSlotArraysInOrder) {
  const PwmSchedule s = compile(duties({{0.5, 0.25, 1.0}}));
  const std::string text = export_firmware(s);
  EXPECT_NE(text.find("flicker_pwm_event_offset_ns[4] = {\n  0, 32000, 60000, 120000\n}"), std::string::npos);
  EXPECT_NE(text.find("flicker_pwm_event_channels[4] = {\n  7, 2, 1, 4\n}"), std::string::npos);
  EXPECT_NE(text.find("flicker_pwm_event_level[4] = {\n  1, 0, 0, 0\n}"), std::string::npos);
  EXPECT_EQ(export_firmware(s), text);
}

TEST(Firmware, ReparseIsIdentityProperty) {
  Rng rng = make_rng(94);
  for (int i = 0; i < 200; ++i) {
    const PwmSchedule s = random_schedule(rng);
    EXPECT_EQ(parse_firmware(export_firmware(s)), s);
  }
}

TEST(ScheduleDoc, RoundTripFuzz) {
  Rng rng = make_rng(95);
  EXPECT_EQ(parse_schedule_doc(export_schedule_doc(PwmSchedule{})), PwmSchedule{});
  for (int i = 0; i < 1000; ++i) {
    const PwmSchedule s = random_schedule(rng);
    const std::string doc = export_schedule_doc(s);
    const PwmSchedule back = parse_schedule_doc(doc);
    EXPECT_EQ(back, s);
    EXPECT_EQ(export_schedule_doc(back), doc);
  }
  EXPECT_THROW(parse_schedule_doc("{\"format\": \"other\"}"), Error);
}

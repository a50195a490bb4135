// Copyright 2026 The tatrack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Simulation time and LTE timing-advance arithmetic.
//
// All times are signed 64-bit picoseconds. The timing-advance step
// 16 * Ts = 1'562'500 / 3 ps is not integral, so spans derived from a TA
// index are evaluated as exact rationals and rounded once (half up) to the
// nearest picosecond. Every function here is pure.

#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <string>

#include "tatrack/errors.hpp"

namespace tatrack {

/// Speed of light in vacuum [m/s].
inline constexpr double kSpeedOfLight = 299'792'458.0;

/// Picoseconds per second.
inline constexpr std::int64_t kPsPerSecond = 1'000'000'000'000;

namespace detail {

/// floor(a / b) for b > 0.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && (a < 0)) --q;
  return q;
}

/// round-half-up(num / den) for den > 0.
constexpr std::int64_t round_half_up(std::int64_t num, std::int64_t den) {
  return floor_div(2 * num + den, 2 * den);
}

}  // namespace detail

/// A signed duration in integer picoseconds.
class Span {
 public:
  constexpr Span() = default;

  static constexpr Span ps(std::int64_t v) { return Span(v); }
  static constexpr Span ns(std::int64_t v) { return Span(v * 1'000); }
  static constexpr Span us(std::int64_t v) { return Span(v * 1'000'000); }
  static constexpr Span ms(std::int64_t v) { return Span(v * 1'000'000'000); }
  static constexpr Span s(std::int64_t v) { return Span(v * kPsPerSecond); }

  /// Nearest-picosecond span from a floating-point number of seconds.
  static Span from_seconds(double seconds) {
    return Span(static_cast<std::int64_t>(std::llround(seconds * 1e12)));
  }

  /// One-way propagation time over `meters` at the speed of light.
  static Span from_meters(double meters) {
    return Span(static_cast<std::int64_t>(
        std::llround(meters / kSpeedOfLight * 1e12)));
  }

  constexpr std::int64_t ticks() const { return ticks_; }
  constexpr double seconds() const { return static_cast<double>(ticks_) * 1e-12; }
  constexpr double microseconds() const { return static_cast<double>(ticks_) * 1e-6; }
  /// Distance light travels during this span.
  constexpr double meters() const { return seconds() * kSpeedOfLight; }

  constexpr Span operator-() const { return Span(-ticks_); }
  constexpr Span& operator+=(Span o) { ticks_ += o.ticks_; return *this; }
  constexpr Span& operator-=(Span o) { ticks_ -= o.ticks_; return *this; }
  friend constexpr Span operator+(Span a, Span b) { return Span(a.ticks_ + b.ticks_); }
  friend constexpr Span operator-(Span a, Span b) { return Span(a.ticks_ - b.ticks_); }
  friend constexpr Span operator*(Span a, std::int64_t k) { return Span(a.ticks_ * k); }
  friend constexpr Span operator*(std::int64_t k, Span a) { return Span(a.ticks_ * k); }
  friend constexpr auto operator<=>(Span, Span) = default;

 private:
  constexpr explicit Span(std::int64_t v) : ticks_(v) {}
  std::int64_t ticks_ = 0;
};

/// A point in simulation time, picoseconds since the scenario epoch.
class Instant {
 public:
  constexpr Instant() = default;
  static constexpr Instant at(Span since_epoch) { return Instant(since_epoch.ticks()); }
  static constexpr Instant from_ps(std::int64_t v) { return Instant(v); }

  constexpr std::int64_t ticks() const { return ticks_; }
  constexpr Span since_epoch() const { return Span::ps(ticks_); }

  constexpr Instant& operator+=(Span d) { ticks_ += d.ticks(); return *this; }
  constexpr Instant& operator-=(Span d) { ticks_ -= d.ticks(); return *this; }
  friend constexpr Instant operator+(Instant t, Span d) { return Instant(t.ticks_ + d.ticks()); }
  friend constexpr Instant operator-(Instant t, Span d) { return Instant(t.ticks_ - d.ticks()); }
  friend constexpr Span operator-(Instant a, Instant b) { return Span::ps(a.ticks_ - b.ticks_); }
  friend constexpr auto operator<=>(Instant, Instant) = default;

 private:
  constexpr explicit Instant(std::int64_t v) : ticks_(v) {}
  std::int64_t ticks_ = 0;
};

/// Numerator of 16 * Ts in picoseconds; the denominator is kTaStepDen.
inline constexpr std::int64_t kTaStepNum = 1'562'500;
inline constexpr std::int64_t kTaStepDen = 3;

/// Largest absolute TA index carried by a Random Access Response.
inline constexpr std::uint16_t kMaxTaIndex = 1282;

/// One-way distance covered by one TA step, c * 8 * Ts [m] (78.0709... m).
inline constexpr double kTaRingWidth = kSpeedOfLight * 8.0 / 30'720'000.0;

/// Timing-advance index T_A as signalled by the eNodeB.
class TaIndex {
 public:
  constexpr TaIndex() = default;
  explicit constexpr TaIndex(int v) : value_(check(v)) {}
  constexpr std::uint16_t value() const { return value_; }
  friend constexpr auto operator<=>(TaIndex, TaIndex) = default;

 private:
  static constexpr std::uint16_t check(int v) {
    if (v < 0 || v > kMaxTaIndex) {
      throw InvalidArgument("TA index " + std::to_string(v) + " outside [0, 1282]");
    }
    return static_cast<std::uint16_t>(v);
  }
  std::uint16_t value_ = 0;
};

/// Frame/subframe layout of the LTE FDD radio frame.
struct TimingConfig {
  static constexpr Span kSubframeLen = Span::ms(1);
  static constexpr int kSubframesPerFrame = 10;
  static constexpr int kFrameModulus = 1024;
  static constexpr std::int64_t kCycle = std::int64_t{kSubframesPerFrame} * kFrameModulus;
};

/// Msg3 goes out this many subframes after its Random Access Response.
inline constexpr std::int64_t kMsg3Delay = 6;
/// A TA command received in subframe n applies from subframe n + 6.
inline constexpr std::int64_t kTaDelaySubframes = 6;
/// HARQ feedback for downlink subframe n is sent in uplink subframe n + 4.
inline constexpr std::int64_t kHarqFeedbackDelay = 4;

/// (frame, subframe) label of one 1 ms subframe; frames wrap mod 1024.
struct SubframeIndex {
  std::uint16_t frame = 0;
  std::uint8_t subframe = 0;

  static constexpr SubframeIndex from_absolute(std::int64_t k) {
    const std::int64_t w = k - detail::floor_div(k, TimingConfig::kCycle) * TimingConfig::kCycle;
    return {static_cast<std::uint16_t>(w / TimingConfig::kSubframesPerFrame),
            static_cast<std::uint8_t>(w % TimingConfig::kSubframesPerFrame)};
  }
  /// Position inside the 10240-subframe cycle.
  constexpr std::int64_t cyclic() const {
    return std::int64_t{frame} * TimingConfig::kSubframesPerFrame + subframe;
  }
  friend constexpr bool operator==(SubframeIndex, SubframeIndex) = default;
};

/// Signed number of subframes from `from` to `to`, taken in [-5120, 5120).
constexpr std::int64_t subframe_distance(SubframeIndex from, SubframeIndex to) {
  constexpr std::int64_t half = TimingConfig::kCycle / 2;
  std::int64_t d = to.cyclic() - from.cyclic();
  d = d - detail::floor_div(d + half, TimingConfig::kCycle) * TimingConfig::kCycle;
  return d;
}

/// Uplink timing advance delta_TA = T_A * 16 * Ts, rounded to the picosecond.
constexpr Span ta_span(TaIndex ta) {
  return Span::ps(detail::round_half_up(std::int64_t{ta.value()} * kTaStepNum, kTaStepDen));
}

/// Round-trip delay quantized to the nearest TA step (ties round up).
/// Throws InvalidArgument for negative or out-of-range delays.
inline TaIndex quantize_ta(Span round_trip) {
  if (round_trip < Span{}) {
    throw InvalidArgument("negative round-trip delay " + std::to_string(round_trip.ticks()) + " ps");
  }
  const std::int64_t idx = detail::round_half_up(round_trip.ticks() * kTaStepDen, kTaStepNum);
  if (idx > kMaxTaIndex) {
    throw InvalidArgument("round-trip delay " + std::to_string(round_trip.ticks()) +
                          " ps exceeds the TA range");
  }
  return TaIndex(static_cast<int>(idx));
}

/// Arrival time of uplink subframe n at a sniffer: t_n + d_ue + d_ulprobe - d_ta.
constexpr Instant uplink_toa(Instant t_n, Span d_ue, Span d_ulprobe, Span d_ta) {
  return t_n + d_ue + d_ulprobe - d_ta;
}

/// d_ue + d_ulprobe recovered as ToA - t_n + d_ta. The TA quantization error
/// cancels exactly.
constexpr Span sum_delay(Instant toa, Instant t_n, Span d_ta) {
  return (toa - t_n) + d_ta;
}

/// Systematic one-way error epsilon = d_ta / 2 - one_way, where `ta` must be
/// the quantization of the round trip 2 * one_way.
inline Span epsilon_of(Span one_way, TaIndex ta) {
  if (quantize_ta(one_way * 2) != ta) {
    throw InvalidArgument("TA index " + std::to_string(ta.value()) +
                          " is not the quantization of the given delay");
  }
  // ta * 16Ts / 2 - one_way = (ta * kTaStepNum - 6 * one_way) / 6
  const std::int64_t num = std::int64_t{ta.value()} * kTaStepNum - 2 * kTaStepDen * one_way.ticks();
  return Span::ps(detail::round_half_up(num, 2 * kTaStepDen));
}

}  // namespace tatrack

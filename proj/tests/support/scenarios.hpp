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

// Scenario builders shared by the simulator tests and the acceptance run.

#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "tatrack/pipeline.hpp"
#include "tatrack/scenario.hpp"
#include "tatrack/sim.hpp"

namespace tatrack::testing {

inline Imsi test_imsi(std::size_t n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "00101%010zu", n);
  return Imsi(buf);
}

inline ProbeSpec probe_at(std::string id, Position p, std::string cell, bool attacker = false) {
  ProbeSpec s;
  s.id = std::move(id);
  s.position = p;
  s.cell = std::move(cell);
  s.role = ProbeRole::both;
  s.attacker = attacker;
  s.tx_power_db = 40.0;
  return s;
}

/// One eNodeB at the origin with a co-located attacker probe.
inline Scenario single_cell(double toa_sigma_m = 0.0) {
  Scenario s;
  s.name = "single-cell";
  s.enbs.push_back({"enb1", {0.0, 0.0}, 30.0, {}});
  s.probes.push_back(probe_at("probe1", {0.0, 0.0}, "enb1", true));
  s.noise.toa_sigma = Span::from_meters(2.0 * toa_sigma_m);
  s.duration = Span::s(10);
  return s;
}

inline UeSpec static_ue(std::size_t n, std::string model, Position p, std::vector<ConnectionPlan> plans) {
  UeSpec u;
  u.id = "ue" + std::to_string(n);
  u.model = std::move(model);
  u.imsi = test_imsi(n);
  u.tmsi = Tmsi{static_cast<std::uint32_t>(0x20000000u + n)};
  u.waypoints.push_back({Instant{}, p});
  u.connections = std::move(plans);
  return u;
}

inline ConnectionPlan plan(Span t, ConnTrigger trigger = ConnTrigger::service) {
  ConnectionPlan p;
  p.t = Instant::at(t);
  p.trigger = trigger;
  return p;
}

/// UEs driving radially away from the eNodeB for one long connection each,
/// so the eNodeB keeps sending TA commands.
inline Scenario mobility_scenario(double ta_resend_prob, bool ack_gating, std::uint64_t seed = 7,
                                  int ues = 20, Span drive = Span::s(30)) {
  Scenario s = single_cell(0.0);
  s.name = "mobility";
  s.seed = seed;
  s.faults.ta_resend_prob = ta_resend_prob;
  s.analysis.ack_gating = ack_gating;
  constexpr double kSpeed = 60.0;
  for (int i = 0; i < ues; ++i) {
    const double a = 2.0 * std::numbers::pi * i / ues;
    const Position dir{std::cos(a), std::sin(a)};
    const Span start = Span::ms(500) + Span::ms(37) * i;
    UeSpec u;
    u.id = "ue" + std::to_string(i + 1);
    u.model = "Huawei P30";
    u.imsi = test_imsi(static_cast<std::size_t>(i + 1));
    u.tmsi = Tmsi{static_cast<std::uint32_t>(0x30000000u + i)};
    u.waypoints.push_back({Instant{}, 200.0 * dir});
    u.waypoints.push_back({Instant::at(drive + Span::s(2)), (200.0 + kSpeed * (drive.seconds() + 2.0)) * dir});
    ConnectionPlan p = plan(start);
    p.data_duration = drive;
    u.connections.push_back(p);
    s.ues.push_back(std::move(u));
  }
  s.duration = drive + Span::s(2);
  return s;
}

/// Three measuring probes around one eNodeB and a random-offset
/// countermeasure.
inline Scenario offset_scenario(Span max_offset, std::uint64_t seed = 3) {
  Scenario s = single_cell(0.0);
  s.name = "offset";
  s.seed = seed;
  s.noise.hw_bias = false;
  s.countermeasure.random_offset = true;
  s.countermeasure.max_offset = max_offset;
  s.probes.push_back(probe_at("probe2", {180.0, 20.0}, "enb1"));
  s.probes.push_back(probe_at("probe3", {-60.0, 170.0}, "enb1"));
  s.probes.push_back(probe_at("probe4", {-90.0, -150.0}, "enb1"));
  s.ues.push_back(static_ue(1, "Huawei P30", {70.0, 40.0}, {plan(Span::s(1), ConnTrigger::attach)}));
  s.ues.push_back(static_ue(2, "iPhone X", {-40.0, 90.0}, {plan(Span::ms(1337), ConnTrigger::attach)}));
  s.duration = Span::s(3);
  return s;
}

/// UE walking from one cell into a neighbor; the second connection is a
/// handover without a request.
inline Scenario handover_scenario(std::uint64_t seed = 5) {
  Scenario s;
  s.name = "handover";
  s.seed = seed;
  s.noise.toa_sigma = Span::from_meters(2.0);
  s.enbs.push_back({"enb1", {0.0, 0.0}, 30.0, {"enb2"}});
  s.enbs.push_back({"enb2", {400.0, 0.0}, 30.0, {"enb1"}});
  s.probes.push_back(probe_at("probe1", {0.0, 0.0}, "enb1", true));
  s.probes.push_back(probe_at("probe1b", {100.0, 120.0}, "enb1"));
  s.probes.push_back(probe_at("probe2", {400.0, 0.0}, "enb2", true));
  s.probes.push_back(probe_at("probe2b", {300.0, -120.0}, "enb2"));
  UeSpec u;
  u.id = "walker";
  u.model = "Huawei P30";
  u.imsi = test_imsi(42);
  u.tmsi = Tmsi{0x4242u};
  u.waypoints.push_back({Instant{}, {60.0, 10.0}});
  u.waypoints.push_back({Instant::at(Span::s(20)), {340.0, 10.0}});
  ConnectionPlan first = plan(Span::s(1));
  first.cell = "enb1";
  first.data_duration = Span::s(12);
  ConnectionPlan second = plan(Span::s(10), ConnTrigger::handover);
  second.cell = "enb2";
  second.data_duration = Span::s(5);
  u.connections = {first, second};
  s.ues.push_back(std::move(u));
  s.duration = Span::s(20);
  return s;
}

struct SuitePhone {
  std::string model;
  bool answers_after_service = true;
};

/// Phones of the identification experiments; only the iPhone 7 ignores an
/// Identity Request after a Service Request.
inline const std::vector<SuitePhone>& identification_phones() {
  static const std::vector<SuitePhone> phones = {
      {"Samsung Galaxy s10"}, {"Samsung Galaxy a8"}, {"Huawei P20 Pro"}, {"Huawei P30 Lite"},
      {"Huawei P30"},         {"Xiaomi Mi9"},        {"Xiaomi MiX 3"},   {"Google Nexus 5X"},
      {"Google Pixel 2"},     {"Google Pixel 3a"},   {"HTC U12+"},       {"OnePlus 7T"},
      {"iPhone 6s"},          {"iPhone 7", false},   {"iPhone 8"},       {"iPhone X"},
      {"iPhone 11"},          {"iPhone 11 Pro"},
  };
  return phones;
}

/// Every phone attaches once and later issues a Service Request; the
/// attacker engages every connection.
inline Scenario identification_suite() {
  Scenario s = single_cell(1.0);
  s.name = "identification";
  s.attacker.engagement = EngagementMode::all;
  const auto& phones = identification_phones();
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const Span t0 = Span::ms(500) + Span::ms(97) * static_cast<std::int64_t>(i);
    UeSpec u = static_ue(i + 1, phones[i].model, {10.0 + i, 5.0},
                         {plan(t0, ConnTrigger::attach), plan(t0 + Span::s(3), ConnTrigger::service)});
    u.answers_identity_after_service_request = phones[i].answers_after_service;
    s.ues.push_back(std::move(u));
  }
  s.duration = Span::s(8);
  return s;
}

/// Sum-delay step caused by one missed TA command copy, in TA indices.
struct ResendStep {
  TaCommandTruth copy;
  /// Probe TA minus UE TA after the copy minus the same before it.
  int step = 0;
};

/// For every lost copy: the probe's TA mismatch against the UE in the eight
/// subframes after the copy would have taken effect, minus the mismatch just
/// before. Copies without measurements on both sides are skipped.
inline std::vector<ResendStep> ta_resend_steps(const SimResult& sim, const std::vector<Measurement>& ms,
                                               const std::string& probe) {
  std::map<std::uint64_t, const GroundTruth*> truth;
  for (const auto& g : sim.truth) {
    if (g.probe == probe) truth[g.tx_id] = &g;
  }
  // Mismatch series per RNTI in uplink order.
  std::map<std::uint16_t, std::vector<std::pair<Instant, int>>> series;
  for (const auto& m : ms) {
    if (m.probe != probe) continue;
    const auto it = truth.find(m.tx_id);
    if (it == truth.end()) continue;
    series[m.rnti.value].emplace_back(m.t_n, m.ta.value() - it->second->ta_ue.value());
  }
  std::vector<ResendStep> out;
  for (const auto& c : sim.ta_commands) {
    if (!c.lost) continue;
    const auto it = series.find(c.rnti.value);
    if (it == series.end()) continue;
    const Instant effective = c.t + Span::ms(kTaDelaySubframes);
    const Instant window_end = effective + Span::ms(8);
    std::optional<int> before;
    std::optional<int> after;
    for (const auto& [t, mismatch] : it->second) {
      if (t < effective) before = mismatch;
      if (t >= effective && t < window_end) after = mismatch;
    }
    if (before && after) out.push_back({c, *after - *before});
  }
  return out;
}

}  // namespace tatrack::testing

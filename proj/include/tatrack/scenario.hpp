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

// Scenario description consumed by the simulator. See docs/scenario.md for
// the JSON layout.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tatrack/extractor.hpp"
#include "tatrack/geometry.hpp"
#include "tatrack/messages.hpp"
#include "tatrack/timebase.hpp"

namespace tatrack {

struct EnbSpec {
  std::string id;
  Position position;
  double tx_power_db = 30.0;
  std::vector<std::string> neighbors;
};

enum class ProbeRole : std::uint8_t { dl, ul, both };
std::string_view to_string(ProbeRole r);

struct ProbeSpec {
  std::string id;
  Position position;
  ProbeRole role = ProbeRole::both;
  /// eNodeB whose carrier the probe listens to.
  std::string cell;
  /// Uplink radio clock minus downlink radio clock.
  Span ul_clock_offset;
  /// Required for role ul: a co-located dl or both probe providing the
  /// downlink timing.
  std::optional<std::string> dl_reference;
  /// Transmits the attacker's injected messages.
  bool attacker = false;
  double tx_power_db = 20.0;
};

enum class ConnTrigger : std::uint8_t { attach, service, handover };
std::string_view to_string(ConnTrigger t);

struct ConnectionPlan {
  Instant t;
  ConnTrigger trigger = ConnTrigger::service;
  /// Serving cell; the nearest eNodeB when empty.
  std::optional<std::string> cell;
  /// Length of the uplink data phase; the traffic default when empty.
  std::optional<Span> data_duration;
};

struct Waypoint {
  Instant t;
  Position position;
};

struct UeSpec {
  std::string id;
  std::string model;
  Imsi imsi;
  std::optional<Tmsi> tmsi;
  std::vector<Waypoint> waypoints;
  std::vector<ConnectionPlan> connections;
  /// Random service connections per minute, used when `connections` is
  /// empty.
  double reconnect_rate = 0.0;
  bool answers_identity_after_service_request = true;
  /// Overrides the fingerprint table value.
  std::optional<double> hw_error_m;
};

struct NoiseModel {
  /// Gaussian jitter of every uplink time of arrival. The default is the
  /// sum-delay jitter of 2.5 m one-way.
  Span toa_sigma = Span::from_meters(5.0);
  /// Add the table hardware error of each UE model.
  bool hw_bias = true;
};

struct FaultModel {
  /// Probability that the UE misses one copy of a TA command.
  double ta_resend_prob = 0.0;
  /// Probability that a probe misses an uplink grant.
  double grant_loss_prob = 0.0;
};

struct Countermeasure {
  bool random_offset = false;
  Span max_offset;
};

struct AttackerSpec {
  EngagementMode engagement = EngagementMode::unknown_tmsi_only;
  std::set<std::uint32_t> targets;
  bool service_reject_trigger = false;
  /// Extra timing error of injected subframes, uniform in +-jitter.
  Span alignment_jitter;
};

struct TrafficSpec {
  Span ul_period = Span::ms(5);
  int ul_per_connection = 40;
};

/// Analysis-side settings used by the pipeline.
struct AnalysisSpec {
  bool ack_gating = true;
  bool align_carriers = true;
  Span decode_threshold = Span::us(4);
  Span handover_max_gap = Span::s(10);
  double handover_max_dist_m = 300.0;
};

struct Scenario {
  std::string name = "scenario";
  std::vector<EnbSpec> enbs;
  std::vector<ProbeSpec> probes;
  std::vector<UeSpec> ues;
  Span duration = Span::s(60);
  std::uint64_t seed = 1;
  NoiseModel noise;
  FaultModel faults;
  Countermeasure countermeasure;
  AttackerSpec attacker;
  TrafficSpec traffic;
  AnalysisSpec analysis;

  const EnbSpec* enb(std::string_view id) const;
  const ProbeSpec* probe(std::string_view id) const;
};

/// "12.5ms", "3us", "0s" or an integer number of picoseconds.
Span parse_span(const nlohmann::json& j);
std::string format_span(Span s);

/// Decodes and validates. Throws InputError naming the offending field.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& s);

/// Reads a scenario file; syntax errors report line and column.
Scenario load_scenario(const std::string& path);
/// Same for in-memory text; `source` prefixes diagnostics.
Scenario parse_scenario(const std::string& text, const std::string& source = "scenario");

/// Structural and geometric checks: unique ids, known references, ordered
/// waypoints, probabilities in range, every UE inside TA range. Throws
/// InputError.
void validate(const Scenario& s);

/// Piecewise-linear position, clamped to the first and last waypoint.
Position position_at(const UeSpec& ue, Instant t);

}  // namespace tatrack

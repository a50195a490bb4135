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

// Discrete-event simulator of eNodeBs, UEs and probes. It produces the event
// log every probe would capture plus the ground truth behind each uplink
// reception.
//
// Subframe n starts at t_n = n ms at every eNodeB. A UE with one-way delay
// d_ue, hardware delay tau and countermeasure offset D sends its preamble
// D + tau late, gets TA = quantize(2 d_ue + tau + D) and advances its uplink
// by d_TA - D. A probe at one-way delay d_ul from the UE therefore measures
// the sum d_ue + d_ul + tau + D.
//
// The attacker probe runs a live Probe and Extractor on its own captures and
// overshadows the network's next downlink message when told to.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tatrack/events.hpp"
#include "tatrack/scenario.hpp"
#include "tatrack/tracker.hpp"

namespace tatrack {

/// Truth behind one uplink reception at one probe.
struct GroundTruth {
  std::uint64_t tx_id = 0;
  std::string probe;
  std::string ue;
  std::string model;
  Imsi imsi;
  std::string cell;
  Rnti rnti;
  /// Send time of the uplink subframe.
  Instant t;
  Position position;
  /// UE to eNodeB and UE to probe, at the send time.
  Span d_ue;
  Span d_ul;
  /// TA index the UE itself applies.
  TaIndex ta_ue;
  /// Countermeasure offset of the connection.
  Span offset;
  /// Hardware delay tau = 2 h / c.
  Span hw_delay;
  std::string message;

  Span true_sum() const { return d_ue + d_ul; }
  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct TaCommandTruth {
  std::string ue;
  std::string cell;
  Rnti rnti;
  /// Downlink subframe time of this copy.
  Instant t;
  int adjust = 0;
  /// The UE missed this copy; the eNodeB resends it 8 subframes later.
  bool lost = false;
  /// 0 for the first copy of a command.
  int resend = 0;
};

/// What happened to one connection.
struct ConnectionTruth {
  std::string ue;
  std::string model;
  Imsi imsi;
  std::optional<Tmsi> tmsi;
  std::string cell;
  Rnti rnti;
  ConnTrigger trigger = ConnTrigger::service;
  /// Subframe time of the preamble.
  Instant start;
  Instant end;
  Position start_position;
  Span offset;
  bool engaged = false;
  ExtractionOutcome outcome = ExtractionOutcome::not_engaged;
  std::optional<double> overshadow_margin_db;
  /// Connection this one was handed over from, as an index into
  /// SimResult::connections.
  std::optional<std::size_t> handover_from;
};

struct SimResult {
  /// Time-ordered captures of every probe.
  std::vector<Event> events;
  std::vector<GroundTruth> truth;
  std::vector<TaCommandTruth> ta_commands;
  std::vector<ConnectionTruth> connections;
};

/// Runs the scenario to its end. Deterministic in the scenario and its seed.
SimResult simulate(const Scenario& scenario);

/// Countermeasure: the preamble leaves `offset` late. Throws InvalidArgument
/// for a negative offset.
Instant apply_random_offset(Instant ue_tx, Span offset);

/// Hardware error the simulator injects for a UE: the override, else the
/// table value, else 0. Zero when hw_bias is off.
double injected_hw_error_m(const Scenario& s, const UeSpec& ue);

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruth>& rows);
/// Throws InputError.
std::vector<GroundTruth> read_ground_truth_csv(std::istream& in);

void write_connections_csv(std::ostream& out, const std::vector<ConnectionTruth>& rows);

struct ReplicationOptions {
  std::vector<std::string> models = {"USRP B210 srsUE", "Huawei P20 Pro", "Huawei P30", "iPhone X", "iPhone 8"};
  std::vector<double> distances_m = {0.0, 7.5, 15.0, 30.0, 45.0, 60.0};
  int connections_per_distance = 6;
  Span spacing = Span::s(12);
  double toa_sigma_m = 0.0;
  std::uint64_t seed = 1;
};

/// One co-located eNodeB and probe, one static UE per (model, distance),
/// repeated connections.
Scenario replication_scenario(const ReplicationOptions& opts);

}  // namespace tatrack

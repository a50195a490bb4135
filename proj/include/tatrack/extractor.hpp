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

// IMSI extraction by overshadowing: after a UE sends its Attach or Service
// Request, the attacker replaces the network's next downlink message with an
// Identity Request and takes the uplink grant for the answer.
//
//   idle -> saw_conn_request -> setup_seen -> identity_injected -> done
//
// Any other order resets the connection to idle.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "tatrack/messages.hpp"
#include "tatrack/timebase.hpp"

namespace tatrack {

enum class Phase : std::uint8_t { idle, saw_conn_request, setup_seen, identity_injected, done };
std::string_view to_string(Phase p);

enum class Trigger : std::uint8_t { attach, service };
std::string_view to_string(Trigger t);

struct ExtractorState {
  Phase phase = Phase::idle;
  std::optional<Tmsi> tmsi;
  std::optional<Trigger> trigger;
  std::optional<Imsi> imsi;
  bool engaged = false;
};

enum class EngagementMode : std::uint8_t { all, unknown_tmsi_only, target_list };

struct EngagementPolicy {
  EngagementMode mode = EngagementMode::unknown_tmsi_only;
  /// True when the TMSI already has an IMSI pair.
  std::function<bool(Tmsi)> is_known;
  /// TMSIs to engage in target_list mode.
  std::set<std::uint32_t> targets;
  /// Inject Service Reject (cause 9) after a Service Request instead of an
  /// Identity Request; the UE then re-attaches with its IMSI.
  bool service_reject_trigger = false;
};

struct Overshadow {
  Message msg;
};
struct SuppressUplinkGrant {};
struct RecordPair {
  std::optional<Tmsi> tmsi;
  Imsi imsi;
};
using Action = std::variant<Overshadow, SuppressUplinkGrant, RecordPair>;

struct StepResult {
  ExtractorState state;
  std::vector<Action> actions;
  /// Set when the event did not fit the sequence and the state was reset.
  std::optional<std::string> diagnostic;
};

/// One transition. Messages outside the extraction flow leave the state
/// unchanged.
StepResult step(const ExtractorState& state, const Message& event, const EngagementPolicy& policy);

enum class OvershadowOutcome : std::uint8_t { replaced, original_kept };

/// Threshold capture model: replaced iff margin >= 3 dB and the injected
/// subframe is aligned to within 4 us.
OvershadowOutcome overshadow_outcome(double margin_db, Span alignment_error);

/// Per-RNTI bookkeeping over many connections.
class Extractor {
 public:
  explicit Extractor(EngagementPolicy policy) : policy_(std::move(policy)) {}

  std::vector<Action> on_message(Rnti rnti, const Message& msg);
  /// Forget a connection (new random access on the RNTI).
  void reset(Rnti rnti) { states_.erase(rnti.value); }
  const ExtractorState* state(Rnti rnti) const;
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  const EngagementPolicy& policy() const { return policy_; }

 private:
  EngagementPolicy policy_;
  std::map<std::uint16_t, ExtractorState> states_;
  std::vector<std::string> diagnostics_;
};

}  // namespace tatrack

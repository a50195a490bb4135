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

#include "tatrack/extractor.hpp"

#include <cstdlib>

namespace tatrack {

namespace {

constexpr double kCaptureMarginDb = 3.0;
constexpr Span kAlignmentLimit = Span::us(4);

bool should_engage(const std::optional<Tmsi>& tmsi, const EngagementPolicy& policy) {
  switch (policy.mode) {
    case EngagementMode::all:
      return true;
    case EngagementMode::unknown_tmsi_only:
      return !(tmsi && policy.is_known && policy.is_known(*tmsi));
    case EngagementMode::target_list:
      return tmsi && policy.targets.contains(tmsi->value);
  }
  return false;
}

StepResult reset(std::string why) {
  StepResult r;
  r.diagnostic = std::move(why);
  return r;
}

}  // namespace

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::saw_conn_request: return "saw_conn_request";
    case Phase::setup_seen: return "setup_seen";
    case Phase::identity_injected: return "identity_injected";
    case Phase::done: return "done";
  }
  return "?";
}

std::string_view to_string(Trigger t) { return t == Trigger::attach ? "attach" : "service"; }

StepResult step(const ExtractorState& state, const Message& event, const EngagementPolicy& policy) {
  StepResult r{state, {}, std::nullopt};
  auto& s = r.state;

  if (const auto* req = std::get_if<RrcConnectionRequest>(&event)) {
    if (state.phase != Phase::idle) {
      r.diagnostic = "connection request in phase " + std::string(to_string(state.phase));
    }
    s = ExtractorState{};
    s.phase = Phase::saw_conn_request;
    if (req->has_tmsi) s.tmsi = req->tmsi_or_random;
    return r;
  }
  if (std::holds_alternative<RrcConnectionSetup>(event)) {
    if (state.phase != Phase::saw_conn_request) {
      return reset("connection setup in phase " + std::string(to_string(state.phase)));
    }
    s.phase = Phase::setup_seen;
    return r;
  }

  const auto* attach = std::get_if<AttachRequest>(&event);
  const auto* service = std::get_if<ServiceRequest>(&event);
  if (attach && state.phase == Phase::identity_injected && std::holds_alternative<Imsi>(attach->id)) {
    // Re-attach provoked by a Service Reject.
    s.phase = Phase::done;
    s.imsi = std::get<Imsi>(attach->id);
    r.actions.push_back(RecordPair{s.tmsi, *s.imsi});
    return r;
  }
  if (attach || service) {
    if (state.phase != Phase::setup_seen) {
      return reset(std::string(attach ? "attach" : "service") + " request in phase " +
                   std::string(to_string(state.phase)));
    }
    s.trigger = attach ? Trigger::attach : Trigger::service;
    if (attach) {
      if (const auto* t = std::get_if<Tmsi>(&attach->id)) {
        s.tmsi = *t;
      } else {
        // IMSI in clear: nothing to inject.
        s.phase = Phase::done;
        s.imsi = std::get<Imsi>(attach->id);
        r.actions.push_back(RecordPair{s.tmsi, *s.imsi});
        return r;
      }
    } else if (!s.tmsi) {
      s.tmsi = service->tmsi;
    }
    if (!should_engage(s.tmsi, policy)) {
      s.phase = Phase::idle;
      return r;
    }
    s.engaged = true;
    s.phase = Phase::identity_injected;
    if (service && policy.service_reject_trigger) {
      r.actions.push_back(Overshadow{ServiceReject{9}});
    } else {
      r.actions.push_back(Overshadow{IdentityRequest{IdentityType::imsi}});
    }
    r.actions.push_back(SuppressUplinkGrant{});
    return r;
  }
  if (const auto* resp = std::get_if<IdentityResponse>(&event)) {
    if (state.phase != Phase::identity_injected) {
      return reset("identity response in phase " + std::string(to_string(state.phase)));
    }
    s.phase = Phase::done;
    s.imsi = resp->imsi;
    r.actions.push_back(RecordPair{s.tmsi, resp->imsi});
    return r;
  }
  return r;
}

OvershadowOutcome overshadow_outcome(double margin_db, Span alignment_error) {
  const bool aligned = std::abs(alignment_error.ticks()) < kAlignmentLimit.ticks();
  return margin_db >= kCaptureMarginDb && aligned ? OvershadowOutcome::replaced
                                                  : OvershadowOutcome::original_kept;
}

std::vector<Action> Extractor::on_message(Rnti rnti, const Message& msg) {
  auto& st = states_[rnti.value];
  StepResult r = step(st, msg, policy_);
  if (r.diagnostic) diagnostics_.push_back("rnti " + std::to_string(rnti.value) + ": " + *r.diagnostic);
  st = r.state;
  return std::move(r.actions);
}

const ExtractorState* Extractor::state(Rnti rnti) const {
  const auto it = states_.find(rnti.value);
  return it == states_.end() ? nullptr : &it->second;
}

}  // namespace tatrack

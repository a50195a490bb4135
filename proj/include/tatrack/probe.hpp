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

// Passive sniffer: follows connections by RNTI, tracks the UE's timing
// advance and turns granted uplink transmissions into ToA measurements.
//
// Downlink shared-channel messages are attributed through the DCI format 1
// assignment in the same subframe, uplink ones through a pending grant
// (DCI format 0 at n + offset, or the RAR grant at n + 6 for Msg3).

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tatrack/events.hpp"
#include "tatrack/geometry.hpp"
#include "tatrack/messages.hpp"
#include "tatrack/timebase.hpp"

namespace tatrack {

struct Measurement {
  std::string probe;
  Rnti rnti;
  Instant conn_start;
  /// Uplink stamp after carrier alignment.
  SubframeStamp subframe;
  Instant toa;
  Instant t_n;
  Span d_ta;
  Span sum_delay;
  TaIndex ta;
  std::uint64_t tx_id = 0;
};

enum class ConnState : std::uint8_t { active, halted, closed };
std::string_view to_string(ConnState s);

struct PendingGrant {
  SubframeIndex target;
  Instant target_time;
  std::uint16_t alloc = 0;
};

struct TaChange {
  Instant effective;
  TaIndex ta;
};

struct ConnectionRecord {
  std::string probe;
  Rnti rnti;
  Instant start;
  Instant last_seen;
  std::optional<Tmsi> tmsi;
  /// Random value of a connection request sent without a TMSI.
  std::optional<std::uint32_t> random_id;
  std::optional<Imsi> imsi;  // only when sent in clear
  bool attach_request = false;
  bool service_request = false;
  TaIndex ta_initial;
  TaIndex ta_current;
  std::vector<TaChange> ta_history;
  std::vector<PendingGrant> pending_grants;
  std::vector<Measurement> measurements;
  std::optional<CapabilityVector> capabilities;
  ConnState state = ConnState::active;
};

struct ProbeConfig {
  std::string id = "probe";
  Position position;
  Position enb_position;
  /// Apply a TA command only once the UE acknowledged it.
  bool ack_gating = true;
  /// Correct the uplink clock from synchronization stamps.
  bool align_carriers = true;
  /// Unused grants are dropped this long after their target subframe.
  Span grant_lifetime = TimingConfig::kSubframeLen * 8;
  Span halt_after = Span::s(1);
  Span close_after = Span::s(10);
  /// Largest carrier misalignment at which uplink still decodes.
  Span decode_threshold = Span::us(4);
};

struct ProbeCounters {
  std::uint64_t uplink_without_grant = 0;
  std::uint64_t undecodable = 0;
  std::uint64_t unknown_rnti = 0;
  std::uint64_t unattributed_downlink = 0;
  std::uint64_t unmatched_ack = 0;
  std::uint64_t ta_clamped = 0;
};

/// Uplink correction dl - ul averaged over stamps with equal (frame,
/// subframe). Throws InvalidArgument when no index is shared.
Span align_carriers(std::span<const SubframeStamp> dl, std::span<const SubframeStamp> ul);

/// Largest |dl - (ul + correction)| over shared indices.
Span residual_misalignment(std::span<const SubframeStamp> dl, std::span<const SubframeStamp> ul,
                           Span correction);

/// t_n = dl_rx - d_dlprobe.
Instant infer_t_n(Instant dl_rx, Span d_dlprobe);

/// Threshold decode model: decodes iff |misalignment| < threshold.
bool decodable(Span misalignment, Span threshold = Span::us(4));

class Probe {
 public:
  /// Called for every message attributed to a connection, after the record
  /// has been updated.
  using Observer = std::function<void(const ConnectionRecord&, const Event&)>;

  explicit Probe(ProbeConfig config);

  /// Events must arrive in time order. Returns the measurements emitted.
  std::vector<Measurement> ingest(const Event& event);
  /// Applies the inactivity timeouts up to `now`.
  void advance_to(Instant now);

  void set_observer(Observer obs) { observer_ = std::move(obs); }

  const ProbeConfig& config() const { return config_; }
  /// Every record in creation order, closed ones included.
  const std::vector<ConnectionRecord>& records() const { return records_; }
  /// The live (not closed) record for an RNTI.
  const ConnectionRecord* find(Rnti rnti) const;
  const ProbeCounters& counters() const { return counters_; }
  Span ul_correction() const { return ul_correction_; }
  Span misalignment() const { return misalignment_; }
  Span d_dlprobe() const { return d_dlprobe_; }

 private:
  struct PendingTa {
    std::uint8_t harq_id;
    int adjust;
    Instant effective;
  };
  struct Scheduled {
    Instant effective;
    int adjust;
  };
  struct DlAssignment {
    SubframeIndex index;
    Instant t;
    Rnti rnti;
    std::uint16_t alloc;
  };
  struct Live {
    std::size_t index;
    std::vector<PendingTa> pending_ta;
    std::vector<Scheduled> scheduled;
  };

  void on_sync(const Event& e);
  void on_downlink(const Event& e);
  std::vector<Measurement> on_uplink(const Event& e);
  ConnectionRecord& open_record(Rnti rnti, Instant t);
  Live* live(Rnti rnti);
  void touch(Live& l, Instant t);
  void schedule_ta(Live& l, int adjust, Instant effective);
  void apply_due(Live& l, Instant upto);
  Instant t_n_of(SubframeIndex idx) const;
  void notify(const Live& l, const Event& e);

  ProbeConfig config_;
  Span d_dlprobe_;
  std::vector<ConnectionRecord> records_;
  std::map<std::uint16_t, Live> live_;
  std::vector<DlAssignment> dl_assignments_;
  std::vector<SubframeStamp> sync_dl_;
  std::vector<SubframeStamp> sync_ul_;
  Span ul_correction_;
  Span misalignment_;
  std::optional<std::pair<SubframeIndex, Instant>> t_ref_;
  ProbeCounters counters_;
  Observer observer_;
};

}  // namespace tatrack

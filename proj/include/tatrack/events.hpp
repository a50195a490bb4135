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

// Timestamped captures as seen by a probe, and their JSONL log format.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tatrack/messages.hpp"
#include "tatrack/timebase.hpp"

namespace tatrack {

enum class Carrier : std::uint8_t { downlink, uplink };

std::string_view to_string(Carrier c);

/// Reception of one subframe on one carrier.
struct SubframeStamp {
  std::uint16_t frame = 0;    // 0..1023
  std::uint8_t subframe = 0;  // 0..9
  Instant rx_time;
  Carrier carrier = Carrier::downlink;

  SubframeIndex index() const { return {frame, subframe}; }
  friend bool operator==(const SubframeStamp&, const SubframeStamp&) = default;
};

/// rx: captured over the air. tx: sent by the attacker itself.
enum class Direction : std::uint8_t { rx, tx };

struct Event {
  std::string probe;
  SubframeStamp stamp;
  Direction direction = Direction::rx;
  /// Resource-block allocation of the shared-channel transmission carrying
  /// the message; 0 for control-channel messages.
  std::uint16_t alloc = 0;
  /// Join key into the ground truth; 0 when there is none.
  std::uint64_t tx_id = 0;
  /// Empty for a bare subframe-boundary (synchronization) record.
  std::optional<Message> msg;

  bool is_sync() const { return !msg.has_value(); }
  friend bool operator==(const Event&, const Event&) = default;
};

nlohmann::json to_json(const Event& e);
/// Throws InputError for malformed records.
Event event_from_json(const nlohmann::json& j);

/// One compact JSON object per line.
void write_jsonl(std::ostream& out, const std::vector<Event>& events);
/// Throws InputError naming the offending line.
std::vector<Event> read_jsonl(std::istream& in);

}  // namespace tatrack

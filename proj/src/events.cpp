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

#include "tatrack/events.hpp"

#include <istream>
#include <ostream>

namespace tatrack {

std::string_view to_string(Carrier c) { return c == Carrier::downlink ? "downlink" : "uplink"; }

nlohmann::json to_json(const Event& e) {
  nlohmann::json j;
  j["t_ps"] = e.stamp.rx_time.ticks();
  j["probe"] = e.probe;
  j["frame"] = e.stamp.frame;
  j["subframe"] = e.stamp.subframe;
  j["carrier"] = std::string(to_string(e.stamp.carrier));
  j["direction"] = e.direction == Direction::rx ? "rx" : "tx";
  if (e.msg) {
    j["alloc"] = e.alloc;
    j["tx_id"] = e.tx_id;
    j["bytes_hex"] = to_hex(encode(*e.msg));
    j["decoded"] = to_json(*e.msg);
  } else {
    j["kind"] = "sync";
  }
  return j;
}

Event event_from_json(const nlohmann::json& j) {
  try {
    Event e;
    e.probe = j.at("probe").get<std::string>();
    e.stamp.rx_time = Instant::from_ps(j.at("t_ps").get<std::int64_t>());
    const int frame = j.at("frame").get<int>();
    const int subframe = j.at("subframe").get<int>();
    if (frame < 0 || frame > 1023 || subframe < 0 || subframe > 9) {
      throw InputError("frame/subframe out of range");
    }
    e.stamp.frame = static_cast<std::uint16_t>(frame);
    e.stamp.subframe = static_cast<std::uint8_t>(subframe);
    const auto carrier = j.at("carrier").get<std::string>();
    if (carrier != "downlink" && carrier != "uplink") throw InputError("bad carrier " + carrier);
    e.stamp.carrier = carrier == "downlink" ? Carrier::downlink : Carrier::uplink;
    const auto dir = j.at("direction").get<std::string>();
    if (dir != "rx" && dir != "tx") throw InputError("bad direction " + dir);
    e.direction = dir == "rx" ? Direction::rx : Direction::tx;
    if (!j.contains("bytes_hex")) return e;
    e.alloc = j.at("alloc").get<std::uint16_t>();
    e.tx_id = j.at("tx_id").get<std::uint64_t>();
    e.msg = decode(from_hex(j.at("bytes_hex").get<std::string>()));
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("malformed event: ") + ex.what());
  } catch (const DecodeError& ex) {
    throw InputError(std::string("undecodable event payload: ") + ex.what());
  } catch (const InvalidArgument& ex) {
    throw InputError(std::string("malformed event: ") + ex.what());
  }
}

void write_jsonl(std::ostream& out, const std::vector<Event>& events) {
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

std::vector<Event> read_jsonl(std::istream& in) {
  std::vector<Event> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& ex) {
      throw InputError("event log line " + std::to_string(n) + ": " + ex.what());
    } catch (const InputError& ex) {
      throw InputError("event log line " + std::to_string(n) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace tatrack

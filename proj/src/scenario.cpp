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

#include "tatrack/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "tatrack/errors.hpp"

namespace tatrack {

namespace {

using nlohmann::json;

/// Cursor into the document that knows its own path for diagnostics.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& what) const { throw InputError(path_ + ": " + what); }

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }

  void expect_object(std::initializer_list<std::string_view> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    for (const auto& [k, v] : j_.items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
        Node(v, path_ + "." + k).fail("unknown field");
      }
    }
  }
  bool has(std::string_view key) const { return j_.contains(key) && !j_.at(std::string(key)).is_null(); }
  Node at(std::string_view key) const {
    if (!has(key)) Node(j_, path_ + "." + std::string(key)).fail("missing field");
    return Node(j_.at(std::string(key)), path_ + "." + std::string(key));
  }
  std::vector<Node> items() const {
    if (!j_.is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.emplace_back(j_[i], path_ + "[" + std::to_string(i) + "]");
    return out;
  }

  std::string str() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  double num() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::uint64_t uint() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<std::int64_t>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_.get<std::uint64_t>();
  }
  Span span() const {
    try {
      return parse_span(j_);
    } catch (const InvalidArgument& e) {
      fail(e.what());
    }
  }
  Position position() const {
    if (!j_.is_array() || j_.size() != 2) fail("expected [x, y] in meters");
    return {Node(j_[0], path_ + "[0]").num(), Node(j_[1], path_ + "[1]").num()};
  }
  double probability() const {
    const double p = num();
    if (p < 0.0 || p > 1.0) fail("probability outside [0, 1]");
    return p;
  }

 private:
  const json& j_;
  std::string path_;
};

ProbeRole role_from(const Node& n) {
  const auto s = n.str();
  if (s == "dl") return ProbeRole::dl;
  if (s == "ul") return ProbeRole::ul;
  if (s == "both") return ProbeRole::both;
  n.fail("role must be dl, ul or both");
}

ConnTrigger trigger_from(const Node& n) {
  const auto s = n.str();
  if (s == "attach") return ConnTrigger::attach;
  if (s == "service") return ConnTrigger::service;
  if (s == "handover") return ConnTrigger::handover;
  n.fail("trigger must be attach, service or handover");
}

EngagementMode engagement_from(const Node& n) {
  const auto s = n.str();
  if (s == "all") return EngagementMode::all;
  if (s == "unknown_tmsi_only") return EngagementMode::unknown_tmsi_only;
  if (s == "target_list") return EngagementMode::target_list;
  n.fail("engagement must be all, unknown_tmsi_only or target_list");
}

std::string_view to_string(EngagementMode m) {
  switch (m) {
    case EngagementMode::all: return "all";
    case EngagementMode::unknown_tmsi_only: return "unknown_tmsi_only";
    case EngagementMode::target_list: return "target_list";
  }
  return "?";
}

EnbSpec enb_from(const Node& n) {
  n.expect_object({"id", "position", "tx_power_db", "neighbors"});
  EnbSpec e;
  e.id = n.at("id").str();
  e.position = n.at("position").position();
  if (n.has("tx_power_db")) e.tx_power_db = n.at("tx_power_db").num();
  if (n.has("neighbors")) {
    for (const auto& x : n.at("neighbors").items()) e.neighbors.push_back(x.str());
  }
  return e;
}

ProbeSpec probe_from(const Node& n) {
  n.expect_object({"id", "position", "role", "cell", "ul_clock_offset", "dl_reference", "attacker",
                   "tx_power_db"});
  ProbeSpec p;
  p.id = n.at("id").str();
  p.position = n.at("position").position();
  if (n.has("role")) p.role = role_from(n.at("role"));
  p.cell = n.at("cell").str();
  if (n.has("ul_clock_offset")) p.ul_clock_offset = n.at("ul_clock_offset").span();
  if (n.has("dl_reference")) p.dl_reference = n.at("dl_reference").str();
  if (n.has("attacker")) p.attacker = n.at("attacker").boolean();
  if (n.has("tx_power_db")) p.tx_power_db = n.at("tx_power_db").num();
  return p;
}

UeSpec ue_from(const Node& n) {
  n.expect_object({"id", "model", "imsi", "tmsi", "waypoints", "connections", "reconnect_rate",
                   "answers_identity_after_service_request", "hw_error_m"});
  UeSpec u;
  u.id = n.at("id").str();
  u.model = n.at("model").str();
  try {
    u.imsi = Imsi(n.at("imsi").str());
  } catch (const InvalidArgument& e) {
    n.at("imsi").fail(e.what());
  }
  if (n.has("tmsi")) {
    const auto v = n.at("tmsi").uint();
    if (v > 0xFFFFFFFFull) n.at("tmsi").fail("TMSI exceeds 32 bits");
    u.tmsi = Tmsi{static_cast<std::uint32_t>(v)};
  }
  for (const auto& w : n.at("waypoints").items()) {
    w.expect_object({"t", "position"});
    u.waypoints.push_back({Instant::at(w.at("t").span()), w.at("position").position()});
  }
  if (n.has("connections")) {
    for (const auto& c : n.at("connections").items()) {
      c.expect_object({"t", "trigger", "cell", "data_duration"});
      ConnectionPlan plan;
      plan.t = Instant::at(c.at("t").span());
      if (c.has("trigger")) plan.trigger = trigger_from(c.at("trigger"));
      if (c.has("cell")) plan.cell = c.at("cell").str();
      if (c.has("data_duration")) plan.data_duration = c.at("data_duration").span();
      u.connections.push_back(plan);
    }
  }
  if (n.has("reconnect_rate")) u.reconnect_rate = n.at("reconnect_rate").num();
  if (n.has("answers_identity_after_service_request")) {
    u.answers_identity_after_service_request = n.at("answers_identity_after_service_request").boolean();
  }
  if (n.has("hw_error_m")) u.hw_error_m = n.at("hw_error_m").num();
  return u;
}

json position_json(Position p) { return json::array({p.x, p.y}); }

/// Byte offset to 1-based line and column.
std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(offset, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::string_view to_string(ProbeRole r) {
  switch (r) {
    case ProbeRole::dl: return "dl";
    case ProbeRole::ul: return "ul";
    case ProbeRole::both: return "both";
  }
  return "?";
}

std::string_view to_string(ConnTrigger t) {
  switch (t) {
    case ConnTrigger::attach: return "attach";
    case ConnTrigger::service: return "service";
    case ConnTrigger::handover: return "handover";
  }
  return "?";
}

const EnbSpec* Scenario::enb(std::string_view id) const {
  const auto it = std::find_if(enbs.begin(), enbs.end(), [&](const EnbSpec& e) { return e.id == id; });
  return it == enbs.end() ? nullptr : &*it;
}

const ProbeSpec* Scenario::probe(std::string_view id) const {
  const auto it = std::find_if(probes.begin(), probes.end(), [&](const ProbeSpec& p) { return p.id == id; });
  return it == probes.end() ? nullptr : &*it;
}

Span parse_span(const json& j) {
  if (j.is_number_integer()) return Span::ps(j.get<std::int64_t>());
  if (!j.is_string()) throw InvalidArgument("expected a duration such as \"5ms\" or integer picoseconds");
  const auto s = j.get<std::string>();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("bad duration \"" + s + "\"");
  }
  const std::string unit = s.substr(used);
  double scale = 0;
  if (unit == "ps") scale = 1;
  else if (unit == "ns") scale = 1e3;
  else if (unit == "us") scale = 1e6;
  else if (unit == "ms") scale = 1e9;
  else if (unit == "s") scale = 1e12;
  else throw InvalidArgument("bad duration unit in \"" + s + "\" (ps, ns, us, ms or s)");
  const double ps = v * scale;
  if (!std::isfinite(ps) || std::abs(ps) > 9e18) throw InvalidArgument("duration out of range: \"" + s + "\"");
  return Span::ps(std::llround(ps));
}

std::string format_span(Span s) {
  const std::int64_t t = s.ticks();
  struct Unit {
    std::int64_t scale;
    const char* name;
  };
  for (const Unit u : {Unit{kPsPerSecond, "s"}, Unit{1'000'000'000, "ms"}, Unit{1'000'000, "us"}, Unit{1'000, "ns"}}) {
    if (t != 0 && t % u.scale == 0) return std::to_string(t / u.scale) + u.name;
  }
  return std::to_string(t) + "ps";
}

Scenario scenario_from_json(const json& j) {
  const Node root(j, "scenario");
  root.expect_object({"name", "enbs", "probes", "ues", "duration", "seed", "noise", "faults", "countermeasure",
                      "attacker", "traffic", "analysis"});
  Scenario s;
  if (root.has("name")) s.name = root.at("name").str();
  for (const auto& e : root.at("enbs").items()) s.enbs.push_back(enb_from(e));
  for (const auto& p : root.at("probes").items()) s.probes.push_back(probe_from(p));
  for (const auto& u : root.at("ues").items()) s.ues.push_back(ue_from(u));
  if (root.has("duration")) s.duration = root.at("duration").span();
  if (root.has("seed")) s.seed = root.at("seed").uint();

  if (root.has("noise")) {
    const auto n = root.at("noise");
    n.expect_object({"toa_sigma", "toa_sigma_m", "hw_bias"});
    if (n.has("toa_sigma") && n.has("toa_sigma_m")) n.fail("give toa_sigma or toa_sigma_m, not both");
    if (n.has("toa_sigma")) s.noise.toa_sigma = n.at("toa_sigma").span();
    if (n.has("toa_sigma_m")) {
      // Meters of one-way distance; the sum of two delays carries twice that.
      s.noise.toa_sigma = Span::from_meters(2.0 * n.at("toa_sigma_m").num());
    }
    if (n.has("hw_bias")) s.noise.hw_bias = n.at("hw_bias").boolean();
  }
  if (root.has("faults")) {
    const auto f = root.at("faults");
    f.expect_object({"ta_resend_prob", "grant_loss_prob"});
    if (f.has("ta_resend_prob")) s.faults.ta_resend_prob = f.at("ta_resend_prob").probability();
    if (f.has("grant_loss_prob")) s.faults.grant_loss_prob = f.at("grant_loss_prob").probability();
  }
  if (root.has("countermeasure")) {
    const auto c = root.at("countermeasure");
    if (c.raw().is_string()) {
      if (c.str() != "off") c.fail("expected \"off\" or {\"random_offset\": {\"max\": ...}}");
    } else {
      c.expect_object({"random_offset"});
      const auto r = c.at("random_offset");
      r.expect_object({"max"});
      s.countermeasure.random_offset = true;
      s.countermeasure.max_offset = r.at("max").span();
    }
  }
  if (root.has("attacker")) {
    const auto a = root.at("attacker");
    a.expect_object({"engagement", "targets", "service_reject_trigger", "alignment_jitter"});
    if (a.has("engagement")) s.attacker.engagement = engagement_from(a.at("engagement"));
    if (a.has("targets")) {
      for (const auto& t : a.at("targets").items()) s.attacker.targets.insert(static_cast<std::uint32_t>(t.uint()));
    }
    if (a.has("service_reject_trigger")) s.attacker.service_reject_trigger = a.at("service_reject_trigger").boolean();
    if (a.has("alignment_jitter")) s.attacker.alignment_jitter = a.at("alignment_jitter").span();
  }
  if (root.has("traffic")) {
    const auto t = root.at("traffic");
    t.expect_object({"ul_period", "ul_per_connection"});
    if (t.has("ul_period")) s.traffic.ul_period = t.at("ul_period").span();
    if (t.has("ul_per_connection")) s.traffic.ul_per_connection = static_cast<int>(t.at("ul_per_connection").uint());
  }
  if (root.has("analysis")) {
    const auto a = root.at("analysis");
    a.expect_object({"ack_gating", "align_carriers", "decode_threshold", "handover_max_gap", "handover_max_dist_m"});
    if (a.has("ack_gating")) s.analysis.ack_gating = a.at("ack_gating").boolean();
    if (a.has("align_carriers")) s.analysis.align_carriers = a.at("align_carriers").boolean();
    if (a.has("decode_threshold")) s.analysis.decode_threshold = a.at("decode_threshold").span();
    if (a.has("handover_max_gap")) s.analysis.handover_max_gap = a.at("handover_max_gap").span();
    if (a.has("handover_max_dist_m")) s.analysis.handover_max_dist_m = a.at("handover_max_dist_m").num();
  }
  validate(s);
  return s;
}

json to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["duration"] = format_span(s.duration);
  j["seed"] = s.seed;
  j["enbs"] = json::array();
  for (const auto& e : s.enbs) {
    j["enbs"].push_back({{"id", e.id}, {"position", position_json(e.position)}, {"tx_power_db", e.tx_power_db},
                         {"neighbors", e.neighbors}});
  }
  j["probes"] = json::array();
  for (const auto& p : s.probes) {
    json pj = {{"id", p.id},
               {"position", position_json(p.position)},
               {"role", std::string(to_string(p.role))},
               {"cell", p.cell},
               {"ul_clock_offset", format_span(p.ul_clock_offset)},
               {"attacker", p.attacker},
               {"tx_power_db", p.tx_power_db}};
    if (p.dl_reference) pj["dl_reference"] = *p.dl_reference;
    j["probes"].push_back(pj);
  }
  j["ues"] = json::array();
  for (const auto& u : s.ues) {
    json uj = {{"id", u.id}, {"model", u.model}, {"imsi", u.imsi.digits()}};
    if (u.tmsi) uj["tmsi"] = u.tmsi->value;
    uj["waypoints"] = json::array();
    for (const auto& w : u.waypoints) {
      uj["waypoints"].push_back({{"t", format_span(w.t.since_epoch())}, {"position", position_json(w.position)}});
    }
    uj["connections"] = json::array();
    for (const auto& c : u.connections) {
      json cj = {{"t", format_span(c.t.since_epoch())}, {"trigger", std::string(to_string(c.trigger))}};
      if (c.cell) cj["cell"] = *c.cell;
      if (c.data_duration) cj["data_duration"] = format_span(*c.data_duration);
      uj["connections"].push_back(cj);
    }
    if (u.reconnect_rate != 0.0) uj["reconnect_rate"] = u.reconnect_rate;
    uj["answers_identity_after_service_request"] = u.answers_identity_after_service_request;
    if (u.hw_error_m) uj["hw_error_m"] = *u.hw_error_m;
    j["ues"].push_back(uj);
  }
  j["noise"] = {{"toa_sigma", format_span(s.noise.toa_sigma)}, {"hw_bias", s.noise.hw_bias}};
  j["faults"] = {{"ta_resend_prob", s.faults.ta_resend_prob}, {"grant_loss_prob", s.faults.grant_loss_prob}};
  if (s.countermeasure.random_offset) {
    j["countermeasure"] = {{"random_offset", {{"max", format_span(s.countermeasure.max_offset)}}}};
  } else {
    j["countermeasure"] = "off";
  }
  j["attacker"] = {{"engagement", std::string(to_string(s.attacker.engagement))},
                   {"targets", s.attacker.targets},
                   {"service_reject_trigger", s.attacker.service_reject_trigger},
                   {"alignment_jitter", format_span(s.attacker.alignment_jitter)}};
  j["traffic"] = {{"ul_period", format_span(s.traffic.ul_period)},
                  {"ul_per_connection", s.traffic.ul_per_connection}};
  j["analysis"] = {{"ack_gating", s.analysis.ack_gating},
                   {"align_carriers", s.analysis.align_carriers},
                   {"decode_threshold", format_span(s.analysis.decode_threshold)},
                   {"handover_max_gap", format_span(s.analysis.handover_max_gap)},
                   {"handover_max_dist_m", s.analysis.handover_max_dist_m}};
  return j;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is one past the offending character.
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string what = e.what();
    if (const auto p = what.find("syntax error"); p != std::string::npos) what = what.substr(p);
    throw InputError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
  }
  try {
    return scenario_from_json(j);
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path + ": cannot open scenario");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

void validate(const Scenario& s) {
  auto fail = [](const std::string& path, const std::string& what) { throw InputError(path + ": " + what); };
  if (s.enbs.empty()) fail("scenario.enbs", "at least one eNodeB is required");
  if (s.duration <= Span{}) fail("scenario.duration", "must be positive");
  if (s.traffic.ul_period < TimingConfig::kSubframeLen * 2) fail("scenario.traffic.ul_period", "must be at least 2ms");
  if (s.traffic.ul_per_connection < 1) fail("scenario.traffic.ul_per_connection", "must be at least 1");
  if (s.countermeasure.random_offset && s.countermeasure.max_offset < Span{}) {
    fail("scenario.countermeasure.random_offset.max", "must not be negative");
  }
  if (s.attacker.alignment_jitter < Span{}) fail("scenario.attacker.alignment_jitter", "must not be negative");
  if (s.noise.toa_sigma < Span{}) fail("scenario.noise.toa_sigma", "must not be negative");
  for (const auto& [name, p] : {std::pair{"ta_resend_prob", s.faults.ta_resend_prob},
                                std::pair{"grant_loss_prob", s.faults.grant_loss_prob}}) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string("scenario.faults.") + name, "probability outside [0, 1]");
  }

  std::set<std::string> ids;
  for (std::size_t i = 0; i < s.enbs.size(); ++i) {
    const auto path = "scenario.enbs[" + std::to_string(i) + "]";
    if (!ids.insert(s.enbs[i].id).second) fail(path + ".id", "duplicate id \"" + s.enbs[i].id + "\"");
  }
  for (std::size_t i = 0; i < s.enbs.size(); ++i) {
    for (const auto& n : s.enbs[i].neighbors) {
      if (!s.enb(n)) fail("scenario.enbs[" + std::to_string(i) + "].neighbors", "unknown cell \"" + n + "\"");
    }
  }
  std::set<std::string> attacker_cells;
  for (std::size_t i = 0; i < s.probes.size(); ++i) {
    const auto& p = s.probes[i];
    const auto path = "scenario.probes[" + std::to_string(i) + "]";
    if (!ids.insert(p.id).second) fail(path + ".id", "duplicate id \"" + p.id + "\"");
    if (!s.enb(p.cell)) fail(path + ".cell", "unknown cell \"" + p.cell + "\"");
    if (p.role == ProbeRole::ul) {
      if (!p.dl_reference) fail(path + ".dl_reference", "required for role ul");
      const ProbeSpec* ref = s.probe(*p.dl_reference);
      if (!ref || ref->role == ProbeRole::ul) fail(path + ".dl_reference", "must name a dl or both probe");
      if (ref->cell != p.cell) fail(path + ".dl_reference", "reference listens to another cell");
      if (distance(ref->position, p.position) > 1e-6) fail(path + ".dl_reference", "reference must be co-located");
    } else if (p.dl_reference) {
      fail(path + ".dl_reference", "only allowed for role ul");
    }
    if (p.attacker) {
      if (p.role != ProbeRole::both) fail(path + ".attacker", "the attacker needs role both");
      if (!attacker_cells.insert(p.cell).second) fail(path + ".attacker", "second attacker in cell " + p.cell);
    }
  }
  for (std::size_t i = 0; i < s.ues.size(); ++i) {
    const auto& u = s.ues[i];
    const auto path = "scenario.ues[" + std::to_string(i) + "]";
    if (!ids.insert(u.id).second) fail(path + ".id", "duplicate id \"" + u.id + "\"");
    if (u.waypoints.empty()) fail(path + ".waypoints", "at least one waypoint is required");
    for (std::size_t k = 1; k < u.waypoints.size(); ++k) {
      if (u.waypoints[k].t <= u.waypoints[k - 1].t) {
        fail(path + ".waypoints[" + std::to_string(k) + "].t", "waypoint times must increase");
      }
    }
    if (u.reconnect_rate < 0) fail(path + ".reconnect_rate", "must not be negative");
    for (std::size_t k = 0; k < u.connections.size(); ++k) {
      const auto& c = u.connections[k];
      const auto cpath = path + ".connections[" + std::to_string(k) + "]";
      if (c.t < Instant{} || c.t >= Instant::at(s.duration)) fail(cpath + ".t", "outside the scenario duration");
      if (k > 0 && c.t <= u.connections[k - 1].t) fail(cpath + ".t", "connection times must increase");
      if (c.cell && !s.enb(*c.cell)) fail(cpath + ".cell", "unknown cell \"" + *c.cell + "\"");
      if (c.trigger == ConnTrigger::service && !u.tmsi) fail(cpath + ".trigger", "service request without a TMSI");
      if (c.trigger == ConnTrigger::handover && k == 0) fail(cpath + ".trigger", "handover needs a prior connection");
      if (c.data_duration && *c.data_duration < TimingConfig::kSubframeLen) {
        fail(cpath + ".data_duration", "must be at least 1ms");
      }
    }
    // Distance to a fixed cell along a piecewise-linear path peaks at a
    // waypoint, so checking the waypoints bounds the whole trajectory.
    std::set<std::string> cells;
    bool nearest = u.connections.empty();
    for (const auto& c : u.connections) {
      if (c.cell) {
        cells.insert(*c.cell);
      } else {
        nearest = true;
      }
    }
    const Span limit = ta_span(TaIndex(kMaxTaIndex));
    const Span extra = s.countermeasure.random_offset ? s.countermeasure.max_offset : Span{};
    for (std::size_t k = 0; k < u.waypoints.size(); ++k) {
      const Position p = u.waypoints[k].position;
      auto check = [&](const EnbSpec& e) {
        if (Span::from_meters(2.0 * distance(p, e.position)) + extra > limit) {
          fail(path + ".waypoints[" + std::to_string(k) + "]", "outside the timing-advance range of cell " + e.id);
        }
      };
      for (const auto& c : cells) check(*s.enb(c));
      if (nearest) {
        check(*std::min_element(s.enbs.begin(), s.enbs.end(), [&](const EnbSpec& a, const EnbSpec& b) {
          return distance(p, a.position) < distance(p, b.position);
        }));
      }
    }
  }
}

Position position_at(const UeSpec& ue, Instant t) {
  const auto& w = ue.waypoints;
  if (w.empty()) throw InvalidArgument("UE without waypoints");
  if (t <= w.front().t) return w.front().position;
  if (t >= w.back().t) return w.back().position;
  const auto it = std::upper_bound(w.begin(), w.end(), t, [](Instant x, const Waypoint& p) { return x < p.t; });
  const Waypoint& b = *it;
  const Waypoint& a = *(it - 1);
  const double f = static_cast<double>((t - a.t).ticks()) / static_cast<double>((b.t - a.t).ticks());
  return a.position + f * (b.position - a.position);
}

}  // namespace tatrack

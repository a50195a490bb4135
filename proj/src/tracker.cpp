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

#include "tatrack/tracker.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>

#include "tatrack/stats.hpp"

namespace tatrack {

using nlohmann::json;

namespace {

constexpr double kOutlierIqr = 10.0;

json locus_to_json(const Locus& l) {
  if (const auto* a = std::get_if<AnnulusLocus>(&l)) {
    return {{"kind", "annulus"}, {"cx", a->center.x}, {"cy", a->center.y}, {"r_inner", a->r_inner},
            {"r_outer", a->r_outer}, {"range", a->range}, {"sigma", a->sigma}};
  }
  const auto& e = std::get<EllipseLocus>(l);
  return {{"kind", "ellipse"}, {"ex", e.focus_enb.x}, {"ey", e.focus_enb.y}, {"px", e.focus_probe.x},
          {"py", e.focus_probe.y}, {"sum", e.sum_dist}, {"sigma", e.sigma}};
}

Locus locus_from_json(const json& j) {
  if (j.at("kind") == "annulus") {
    AnnulusLocus a;
    a.center = {j.at("cx"), j.at("cy")};
    a.r_inner = j.at("r_inner");
    a.r_outer = j.at("r_outer");
    a.range = j.at("range");
    a.sigma = j.at("sigma");
    return a;
  }
  EllipseLocus e;
  e.focus_enb = {j.at("ex"), j.at("ey")};
  e.focus_probe = {j.at("px"), j.at("py")};
  e.sum_dist = j.at("sum");
  e.sigma = j.at("sigma");
  return e;
}

json estimate_to_json(const PositionEstimate& e) {
  json cands = json::array();
  for (const auto& c : e.candidates) cands.push_back({c.x, c.y});
  return {{"x", e.position.x},
          {"y", e.position.y},
          {"residual_rms", e.residual_rms},
          {"covariance", e.covariance},
          {"candidates", cands},
          {"degenerate", e.degenerate}};
}

PositionEstimate estimate_from_json(const json& j) {
  PositionEstimate e;
  e.position = {j.at("x"), j.at("y")};
  e.residual_rms = j.at("residual_rms");
  e.covariance = j.at("covariance").get<std::array<double, 4>>();
  for (const auto& c : j.at("candidates")) e.candidates.push_back({c.at(0), c.at(1)});
  e.degenerate = j.at("degenerate");
  return e;
}

json key_to_json(const ConnectionKey& k) {
  return {{"probe", k.probe}, {"rnti", k.rnti.value}, {"start", k.start.ticks()}};
}

ConnectionKey key_from_json(const json& j) {
  return {j.at("probe").get<std::string>(), Rnti{j.at("rnti").get<std::uint16_t>()},
          Instant::from_ps(j.at("start").get<std::int64_t>())};
}

LinkKind link_kind_from_string(std::string_view s) {
  for (LinkKind k : {LinkKind::known, LinkKind::new_pair, LinkKind::imsi_direct, LinkKind::provisional,
                     LinkKind::handover}) {
    if (to_string(k) == s) return k;
  }
  throw InputError("unknown link kind '" + std::string(s) + "'");
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::optional<ConnectionStats> connection_stats(std::span<const double> meters) {
  if (meters.size() < kMinMeasurements) return std::nullopt;
  const OutlierSplit split = remove_outliers(meters, kOutlierIqr);
  if (split.kept.size() < kMinMeasurements) return std::nullopt;
  ConnectionStats s;
  s.median_distance_m = median(split.kept);
  s.n_measurements = split.kept.size();
  s.n_outliers_removed = split.removed.size();
  s.iqr_m = split.iqr;
  return s;
}

std::string_view to_string(ExtractionOutcome o) {
  switch (o) {
    case ExtractionOutcome::imsi_obtained: return "imsi_obtained";
    case ExtractionOutcome::imsi_in_clear: return "imsi_in_clear";
    case ExtractionOutcome::no_response: return "no_response";
    case ExtractionOutcome::overshadow_failed: return "overshadow_failed";
    case ExtractionOutcome::not_engaged: return "not_engaged";
  }
  return "?";
}

ExtractionOutcome extraction_outcome_from_string(std::string_view s) {
  for (auto o : {ExtractionOutcome::imsi_obtained, ExtractionOutcome::imsi_in_clear,
                 ExtractionOutcome::no_response, ExtractionOutcome::overshadow_failed,
                 ExtractionOutcome::not_engaged}) {
    if (to_string(o) == s) return o;
  }
  throw InputError("unknown extraction outcome '" + std::string(s) + "'");
}

json to_json(const ExtractionRecord& r) {
  json j = {{"t_ps", r.t.ticks()}, {"probe", r.probe}, {"rnti", r.rnti.value}};
  j["tmsi"] = r.tmsi ? json(r.tmsi->value) : json(nullptr);
  j["imsi"] = r.imsi ? json(r.imsi->digits()) : json(nullptr);
  j["trigger"] = r.trigger ? json(to_string(*r.trigger)) : json(nullptr);
  j["outcome"] = to_string(r.outcome);
  return j;
}

ExtractionRecord extraction_from_json(const json& j) {
  try {
    ExtractionRecord r;
    r.t = Instant::from_ps(j.at("t_ps").get<std::int64_t>());
    r.probe = j.at("probe").get<std::string>();
    r.rnti = Rnti{j.at("rnti").get<std::uint16_t>()};
    if (!j.at("tmsi").is_null()) r.tmsi = Tmsi{j.at("tmsi").get<std::uint32_t>()};
    if (!j.at("imsi").is_null()) r.imsi = Imsi(j.at("imsi").get<std::string>());
    if (!j.at("trigger").is_null()) {
      r.trigger = j.at("trigger") == "attach" ? Trigger::attach : Trigger::service;
    }
    r.outcome = extraction_outcome_from_string(j.at("outcome").get<std::string>());
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("extraction record: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw InputError(std::string("extraction record: ") + e.what());
  }
}

ConnectionKey key_of(const ConnectionRecord& rec) { return {rec.probe, rec.rnti, rec.start}; }

std::string to_string(const ConnectionKey& k) {
  return k.probe + "/" + std::to_string(k.rnti.value) + "@" + std::to_string(k.start.ticks());
}

std::string_view to_string(LinkKind k) {
  switch (k) {
    case LinkKind::known: return "known";
    case LinkKind::new_pair: return "new_pair";
    case LinkKind::imsi_direct: return "imsi_direct";
    case LinkKind::provisional: return "provisional";
    case LinkKind::handover: return "handover";
  }
  return "?";
}

std::string provisional_id(const ConnectionKey& key) {
  const std::string s = to_string(key);
  const std::uint64_t a = fnv1a(s, 0xcbf29ce484222325ULL);
  const std::uint64_t b = fnv1a(s, 0x84222325cbf29ce4ULL);
  char buf[48];
  std::snprintf(buf, sizeof buf, "anon-%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(a >> 32),
                static_cast<unsigned>((a >> 16) & 0xFFFF), static_cast<unsigned>(a & 0xFFFF),
                static_cast<unsigned>(b >> 48), static_cast<unsigned long long>(b & 0xFFFFFFFFFFFFULL));
  return buf;
}

std::vector<Locus> correct_loci(std::span<const Locus> loci, double hw_error_m) {
  std::vector<Locus> out;
  out.reserve(loci.size());
  for (const auto& l : loci) {
    if (const auto* a = std::get_if<AnnulusLocus>(&l)) {
      AnnulusLocus c = *a;
      c.r_inner = std::max(0.0, c.r_inner - hw_error_m);
      c.r_outer = std::max(0.0, c.r_outer - hw_error_m);
      c.range = std::max(0.0, c.range - hw_error_m);
      out.emplace_back(c);
    } else {
      EllipseLocus c = std::get<EllipseLocus>(l);
      c.sum_dist = std::max(c.focal_distance(), c.sum_dist - 2.0 * hw_error_m);
      out.emplace_back(c);
    }
  }
  return out;
}

std::optional<Imsi> TrackDb::lookup(Tmsi tmsi, Instant t) const {
  for (const auto& p : pairs_) {
    if (p.tmsi == tmsi && p.first_seen <= t && (!p.valid_until || t < *p.valid_until)) return p.imsi;
  }
  return std::nullopt;
}

bool TrackDb::knows(Tmsi tmsi) const {
  return std::any_of(pairs_.begin(), pairs_.end(),
                     [&](const PairRecord& p) { return p.tmsi == tmsi && !p.valid_until; });
}

void TrackDb::add_pair(Tmsi tmsi, const Imsi& imsi, Instant t) {
  const json op = {{"op", "pair"}, {"tmsi", tmsi.value}, {"imsi", imsi.digits()}, {"t", t.ticks()}};
  apply(op);
  journal_.push_back(op);
}

void TrackDb::record_connection(const ConnectionEntry& e) {
  json op = {{"op", "connection"}, {"key", key_to_json(e.key)}, {"cell", e.cell},
             {"identity", e.identity}, {"kind", to_string(e.kind)}, {"last_seen", e.last_seen.ticks()}};
  apply(op);
  journal_.push_back(std::move(op));
}

const ConnectionEntry* TrackDb::connection(const ConnectionKey& key) const {
  const auto it = connections_.find(key);
  return it == connections_.end() ? nullptr : &it->second;
}

void TrackDb::add_fix(Fix fix) {
  json loci = json::array();
  for (const auto& l : fix.loci) loci.push_back(locus_to_json(l));
  json op = {{"op", "fix"}, {"key", key_to_json(fix.key)}, {"t", fix.t.ticks()},
             {"loci", std::move(loci)}, {"estimate", estimate_to_json(fix.estimate)}};
  apply(op);
  journal_.push_back(std::move(op));
}

std::vector<const Fix*> TrackDb::fixes(const ConnectionKey& key) const {
  std::vector<const Fix*> out;
  for (const auto& f : fixes_) {
    if (f.key == key) out.push_back(&f);
  }
  std::stable_sort(out.begin(), out.end(), [](const Fix* a, const Fix* b) { return a->t < b->t; });
  return out;
}

void TrackDb::set_model(const std::string& identity, const std::string& model,
                        std::optional<double> hw_error_m) {
  json op = {{"op", "model"}, {"identity", identity}, {"model", model}};
  op["hw_error_m"] = hw_error_m ? json(*hw_error_m) : json(nullptr);
  apply(op);
  journal_.push_back(std::move(op));
}

std::optional<std::string> TrackDb::model_of(const std::string& identity) const {
  const auto it = models_.find(identity);
  if (it == models_.end()) return std::nullopt;
  return it->second.model;
}

std::optional<double> TrackDb::hw_error_of(const std::string& identity) const {
  const auto it = models_.find(identity);
  if (it == models_.end()) return std::nullopt;
  return it->second.hw_error_m;
}

std::vector<std::string> TrackDb::identities() const {
  std::vector<std::string> out;
  for (const auto& [key, c] : connections_) out.push_back(c.identity);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<TracePoint> TrackDb::build_trace(const std::string& identity) const {
  const std::optional<double> hw = hw_error_of(identity);
  bool found = false;
  std::vector<TracePoint> out;
  for (const auto& [key, c] : connections_) {
    if (c.identity != identity) continue;
    found = true;
    for (const Fix* f : fixes(key)) {
      TracePoint p{f->t, key, f->estimate.position, f->estimate.residual_rms, false};
      if (hw) {
        const auto loci = correct_loci(f->loci, *hw);
        PositionEstimate est;
        try {
          est = multilaterate(loci, f->estimate.position);
        } catch (const ConvergenceError& e) {
          est = e.best();
        }
        p.position = est.position;
        p.residual_rms_m = est.residual_rms;
        p.corrected = true;
      }
      out.push_back(p);
    }
  }
  if (!found) throw InvalidArgument("no connection linked to identity '" + identity + "'");
  std::stable_sort(out.begin(), out.end(), [](const TracePoint& a, const TracePoint& b) {
    return a.t < b.t || (a.t == b.t && a.key < b.key);
  });
  return out;
}

void TrackDb::apply(const json& op) {
  const std::string kind = op.at("op");
  if (kind == "pair") {
    const Tmsi tmsi{op.at("tmsi").get<std::uint32_t>()};
    const Imsi imsi(op.at("imsi").get<std::string>());
    const Instant t = Instant::from_ps(op.at("t").get<std::int64_t>());
    PairRecord* open = nullptr;
    for (auto& p : pairs_) {
      if (p.tmsi != tmsi || p.valid_until) continue;
      if (p.imsi != imsi) {
        throw IntegrityError("TMSI " + std::to_string(tmsi.value) + " is paired with IMSI " +
                             p.imsi.digits() + ", not " + imsi.digits());
      }
      open = &p;
    }
    for (auto& p : pairs_) {
      if (p.imsi == imsi && p.tmsi != tmsi && !p.valid_until) p.valid_until = t;
    }
    if (open) {
      open->first_seen = std::min(open->first_seen, t);
      open->last_seen = std::max(open->last_seen, t);
    } else {
      pairs_.push_back({tmsi, imsi, t, t, std::nullopt});
    }
  } else if (kind == "connection") {
    ConnectionEntry e;
    e.key = key_from_json(op.at("key"));
    e.cell = op.at("cell").get<std::string>();
    e.identity = op.at("identity").get<std::string>();
    e.kind = link_kind_from_string(op.at("kind").get<std::string>());
    e.last_seen = Instant::from_ps(op.at("last_seen").get<std::int64_t>());
    connections_[e.key] = std::move(e);
  } else if (kind == "fix") {
    Fix f;
    f.key = key_from_json(op.at("key"));
    f.t = Instant::from_ps(op.at("t").get<std::int64_t>());
    for (const auto& l : op.at("loci")) f.loci.push_back(locus_from_json(l));
    f.estimate = estimate_from_json(op.at("estimate"));
    fixes_.push_back(std::move(f));
  } else if (kind == "model") {
    ModelInfo m{op.at("model").get<std::string>(), std::nullopt};
    if (!op.at("hw_error_m").is_null()) m.hw_error_m = op.at("hw_error_m").get<double>();
    models_[op.at("identity").get<std::string>()] = std::move(m);
  } else {
    throw InputError("unknown journal operation '" + kind + "'");
  }
}

void TrackDb::write_journal(std::ostream& out) const {
  for (const auto& op : journal_) out << op.dump() << '\n';
}

TrackDb TrackDb::replay(std::istream& in) {
  TrackDb db;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      json op = json::parse(line);
      db.apply(op);
      db.journal_.push_back(std::move(op));
    } catch (const json::exception& e) {
      throw InputError("journal line " + std::to_string(n) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw InputError("journal line " + std::to_string(n) + ": " + e.what());
    }
  }
  return db;
}

LinkResult link_connection(TrackDb& db, const ConnectionRecord& conn,
                           std::span<const ExtractionRecord> extraction_log, const std::string& cell) {
  if (!conn.tmsi && !conn.random_id && !conn.imsi) {
    throw InvalidArgument("connection " + to_string(key_of(conn)) + " has neither a TMSI nor a random value");
  }
  std::optional<Imsi> extracted;
  Instant t_extracted = conn.last_seen;
  for (const auto& r : extraction_log) {
    if (r.probe != conn.probe || r.rnti != conn.rnti || r.t < conn.start || r.t > conn.last_seen || !r.imsi) {
      continue;
    }
    if (extracted && *extracted != *r.imsi) {
      throw IntegrityError("conflicting extraction records for connection " + to_string(key_of(conn)));
    }
    extracted = r.imsi;
    t_extracted = r.t;
  }
  if (conn.imsi) {
    if (extracted && *extracted != *conn.imsi) {
      throw IntegrityError("extraction record contradicts the IMSI seen on connection " +
                           to_string(key_of(conn)));
    }
    extracted = conn.imsi;
  }

  LinkResult out{provisional_id(key_of(conn)), LinkKind::provisional};
  if (conn.tmsi) {
    if (const auto known = db.lookup(*conn.tmsi, conn.start)) {
      if (extracted && *extracted != *known) {
        throw IntegrityError("TMSI " + std::to_string(conn.tmsi->value) + " is paired with IMSI " +
                             known->digits() + " but connection " + to_string(key_of(conn)) + " revealed " +
                             extracted->digits());
      }
      db.add_pair(*conn.tmsi, *known, conn.last_seen);
      out = {known->digits(), LinkKind::known};
    } else if (extracted) {
      db.add_pair(*conn.tmsi, *extracted, t_extracted);
      out = {extracted->digits(), LinkKind::new_pair};
    }
  } else if (extracted) {
    out = {extracted->digits(), LinkKind::imsi_direct};
  }
  db.record_connection({key_of(conn), cell, out.identity, out.kind, conn.last_seen});
  return out;
}

std::optional<HandoverCandidate> match_handover(const ConnectionRecord& new_conn, const std::string& new_cell,
                                                Position first_position,
                                                std::span<const HandoverCandidate> halted,
                                                const NeighborFn& neighbors, const HandoverParams& params) {
  if (new_conn.service_request || new_conn.attach_request || new_conn.tmsi || new_conn.random_id) {
    throw InvalidArgument("connection " + to_string(key_of(new_conn)) +
                          " began with a connection request, not a handover");
  }
  const HandoverCandidate* best = nullptr;
  double best_d = 0.0;
  for (const auto& c : halted) {
    const Span gap = new_conn.start - c.halted_at;
    if (gap < Span{} || gap > params.max_gap) continue;
    if (c.cell == new_cell || (neighbors && !neighbors(c.cell, new_cell))) continue;
    if (!c.last_position) continue;
    const double d = distance(*c.last_position, first_position);
    if (d > params.max_dist_m) continue;
    if (!best || d < best_d || (d == best_d && c.key < best->key)) {
      best = &c;
      best_d = d;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

}  // namespace tatrack

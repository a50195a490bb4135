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

#include "tatrack/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "tatrack/csv.hpp"
#include "tatrack/errors.hpp"
#include "tatrack/fingerprint.hpp"
#include "tatrack/stats.hpp"

namespace tatrack {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string ps(Instant t) { return std::to_string(t.ticks()); }
std::string ps(Span s) { return std::to_string(s.ticks()); }

const EnbSpec& cell_of(const Scenario& s, const std::string& probe) {
  const ProbeSpec* p = s.probe(probe);
  if (!p) throw InputError("measurement from unknown probe \"" + probe + "\"");
  return *s.enb(p->cell);
}

std::int64_t subframe_number(Instant t_n) {
  const std::int64_t sf = TimingConfig::kSubframeLen.ticks();
  return detail::floor_div(t_n.ticks() + sf / 2, sf);
}

}  // namespace

// --- probe -----------------------------------------------------------------

ProbeConfig probe_config(const Scenario& s, const ProbeSpec& p) {
  ProbeConfig cfg;
  cfg.id = p.id;
  cfg.position = p.position;
  cfg.enb_position = s.enb(p.cell)->position;
  cfg.ack_gating = s.analysis.ack_gating;
  cfg.align_carriers = s.analysis.align_carriers;
  cfg.decode_threshold = s.analysis.decode_threshold;
  return cfg;
}

std::vector<Event> events_for(const Scenario&, const ProbeSpec& p, const std::vector<Event>& log) {
  std::vector<Event> out;
  for (const auto& e : log) {
    if (p.role == ProbeRole::ul) {
      const bool own_ul = e.probe == p.id && e.stamp.carrier == Carrier::uplink;
      const bool ref_dl = e.probe == *p.dl_reference && e.stamp.carrier == Carrier::downlink;
      if (own_ul || ref_dl) out.push_back(e);
    } else if (e.probe == p.id) {
      out.push_back(e);
    }
  }
  return out;
}

std::vector<Probe> replay_probes(const Scenario& s, const std::vector<Event>& log) {
  std::vector<Probe> probes;
  for (const auto& p : s.probes) {
    Probe probe(probe_config(s, p));
    Instant last;
    for (const auto& e : events_for(s, p, log)) {
      probe.ingest(e);
      last = std::max(last, e.stamp.rx_time);
    }
    probe.advance_to(last + probe.config().close_after + Span::s(1));
    probes.push_back(std::move(probe));
  }
  return probes;
}

std::vector<Measurement> all_measurements(const std::vector<Probe>& probes) {
  std::vector<Measurement> out;
  for (const auto& p : probes) {
    for (const auto& r : p.records()) out.insert(out.end(), r.measurements.begin(), r.measurements.end());
  }
  std::stable_sort(out.begin(), out.end(), [](const Measurement& a, const Measurement& b) {
    return std::tie(a.probe, a.toa) < std::tie(b.probe, b.toa);
  });
  return out;
}

void write_measurements_csv(std::ostream& out, const std::vector<Measurement>& ms) {
  csv::write_row(out, {"probe", "rnti", "conn_start_ps", "frame", "subframe", "toa_ps", "t_n_ps", "ta", "d_ta_ps",
                       "sum_delay_ps", "tx_id"});
  for (const auto& m : ms) {
    csv::write_row(out, {m.probe, std::to_string(m.rnti.value), ps(m.conn_start), std::to_string(m.subframe.frame),
                         std::to_string(m.subframe.subframe), ps(m.toa), ps(m.t_n), std::to_string(m.ta.value()),
                         ps(m.d_ta), ps(m.sum_delay), std::to_string(m.tx_id)});
  }
}

std::vector<Measurement> read_measurements_csv(std::istream& in) {
  const auto t = csv::Table::parse(in);
  const std::size_t c_probe = t.column("probe"), c_rnti = t.column("rnti"), c_start = t.column("conn_start_ps"),
                    c_frame = t.column("frame"), c_sf = t.column("subframe"), c_toa = t.column("toa_ps"),
                    c_tn = t.column("t_n_ps"), c_ta = t.column("ta"), c_dta = t.column("d_ta_ps"),
                    c_sum = t.column("sum_delay_ps"), c_tx = t.column("tx_id");
  std::vector<Measurement> out;
  std::size_t line = 1;
  for (const auto& r : t.rows()) {
    ++line;
    try {
      Measurement m;
      m.probe = r[c_probe];
      m.rnti = Rnti{static_cast<std::uint16_t>(std::stoul(r[c_rnti]))};
      m.conn_start = Instant::from_ps(std::stoll(r[c_start]));
      m.toa = Instant::from_ps(std::stoll(r[c_toa]));
      m.subframe = {static_cast<std::uint16_t>(std::stoul(r[c_frame])),
                    static_cast<std::uint8_t>(std::stoul(r[c_sf])), m.toa, Carrier::uplink};
      m.t_n = Instant::from_ps(std::stoll(r[c_tn]));
      m.ta = TaIndex(std::stoi(r[c_ta]));
      m.d_ta = Span::ps(std::stoll(r[c_dta]));
      m.sum_delay = Span::ps(std::stoll(r[c_sum]));
      m.tx_id = std::stoull(r[c_tx]);
      out.push_back(std::move(m));
    } catch (const std::exception& e) {
      throw InputError("measurements line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

void write_records_csv(std::ostream& out, const std::vector<Probe>& probes) {
  csv::write_row(out, {"probe", "rnti", "start_ps", "last_seen_ps", "tmsi", "random_id", "imsi", "attach_request",
                       "service_request", "ta_initial", "ta_final", "measurements", "state"});
  for (const auto& p : probes) {
    for (const auto& r : p.records()) {
      csv::write_row(out, {r.probe, std::to_string(r.rnti.value), ps(r.start), ps(r.last_seen),
                           r.tmsi ? std::to_string(r.tmsi->value) : "",
                           r.random_id ? std::to_string(*r.random_id) : "", r.imsi ? r.imsi->digits() : "",
                           r.attach_request ? "1" : "0", r.service_request ? "1" : "0",
                           std::to_string(r.ta_initial.value()), std::to_string(r.ta_current.value()),
                           std::to_string(r.measurements.size()), std::string(to_string(r.state))});
    }
  }
}

// --- extraction ------------------------------------------------------------

std::vector<ExtractionRecord> replay_extraction(const Scenario& s, const std::vector<Event>& log) {
  std::vector<ExtractionRecord> out;
  for (const auto& p : s.probes) {
    if (!p.attacker) continue;
    std::set<std::uint32_t> known;
    EngagementPolicy policy;
    policy.mode = s.attacker.engagement;
    policy.targets = s.attacker.targets;
    policy.service_reject_trigger = s.attacker.service_reject_trigger;
    policy.is_known = [&known](Tmsi t) { return known.contains(t.value); };
    Extractor ex(policy);

    struct Seen {
      ExtractorState state;
      Instant t;
    };
    std::map<std::pair<std::uint16_t, Instant>, Seen> seen;
    Probe probe(probe_config(s, p));
    probe.set_observer([&](const ConnectionRecord& rec, const Event& e) {
      if (e.direction == Direction::tx || !e.msg) return;
      if (std::holds_alternative<RandomAccessResponse>(*e.msg)) ex.reset(rec.rnti);
      for (const auto& a : ex.on_message(rec.rnti, *e.msg)) {
        if (const auto* pair = std::get_if<RecordPair>(&a); pair && pair->tmsi) known.insert(pair->tmsi->value);
      }
      if (const auto* st = ex.state(rec.rnti); st && st->trigger) {
        seen[{rec.rnti.value, rec.start}] = {*st, e.stamp.rx_time};
      }
    });
    for (const auto& e : events_for(s, p, log)) probe.ingest(e);

    for (const auto& rec : probe.records()) {
      const auto it = seen.find({rec.rnti.value, rec.start});
      if (it == seen.end()) continue;
      const ExtractorState& st = it->second.state;
      ExtractionRecord r;
      r.t = it->second.t;
      r.probe = p.id;
      r.rnti = rec.rnti;
      r.tmsi = st.tmsi;
      r.imsi = st.imsi;
      r.trigger = st.trigger;
      if (st.imsi) {
        r.outcome = st.engaged ? ExtractionOutcome::imsi_obtained : ExtractionOutcome::imsi_in_clear;
      } else if (st.engaged) {
        r.outcome = ExtractionOutcome::no_response;
      } else {
        r.outcome = ExtractionOutcome::not_engaged;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_extraction_jsonl(std::ostream& out, const std::vector<ExtractionRecord>& rs) {
  for (const auto& r : rs) out << to_json(r).dump() << '\n';
}

std::vector<ExtractionRecord> read_extraction_jsonl(std::istream& in) {
  std::vector<ExtractionRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(extraction_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw InputError("extraction line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// --- localization ----------------------------------------------------------

std::vector<std::string> primary_probes(const Scenario& s) {
  std::vector<std::string> out;
  std::set<std::string> cells;
  for (const auto& p : s.probes) {
    if (p.role == ProbeRole::dl) continue;
    if (cells.insert(p.cell).second) out.push_back(p.id);
  }
  return out;
}

std::vector<Localized> localize(const Scenario& s, const std::vector<Measurement>& ms) {
  const auto primaries = primary_probes(s);
  const double sigma = std::max(s.noise.toa_sigma.meters(), 0.5);

  // Same cell, same RNTI, same uplink subframe.
  using GroupKey = std::tuple<std::string, std::uint16_t, std::int64_t>;
  std::map<GroupKey, std::vector<const Measurement*>> groups;
  for (const auto& m : ms) groups[{cell_of(s, m.probe).id, m.rnti.value, subframe_number(m.t_n)}].push_back(&m);

  std::map<ConnectionKey, Position> previous;
  std::vector<Localized> out;
  for (auto& [gk, members] : groups) {
    const auto& cell = std::get<0>(gk);
    const EnbSpec& enb = *s.enb(cell);
    const auto primary = std::find_if(members.begin(), members.end(), [&](const Measurement* m) {
      return std::find(primaries.begin(), primaries.end(), m->probe) != primaries.end();
    });
    if (primary == members.end()) continue;
    const Measurement& pm = **primary;

    std::vector<Locus> loci;
    loci.push_back(annulus_from_ta(enb.position, pm.ta));
    bool spread = false;
    for (const Measurement* m : members) {
      const Position at = s.probe(m->probe)->position;
      try {
        loci.push_back(ellipse_from_sum(enb.position, at, m->sum_delay, sigma));
      } catch (const InfeasibleLocus&) {
        continue;
      }
      spread = spread || distance(at, enb.position) > 1e-6;
    }
    if (!spread || loci.size() < 2) continue;

    PositionEstimate est;
    try {
      est = multilaterate(loci);
    } catch (const ConvergenceError& e) {
      est = e.best();
    } catch (const Error&) {
      continue;
    }
    Localized fix{cell, {pm.probe, pm.rnti, pm.conn_start}, pm.t_n, loci, est};
    if (const auto prev = previous.find(fix.key); prev != previous.end() && est.candidates.size() > 1) {
      const auto best = std::min_element(est.candidates.begin(), est.candidates.end(), [&](Position a, Position b) {
        return distance(a, prev->second) < distance(b, prev->second);
      });
      try {
        auto refined = multilaterate(loci, *best);
        refined.candidates = est.candidates;
        fix.estimate = refined;
      } catch (const ConvergenceError& e) {
        fix.estimate = e.best();
      }
    }
    previous[fix.key] = fix.estimate.position;
    out.push_back(std::move(fix));
  }
  std::stable_sort(out.begin(), out.end(), [](const Localized& a, const Localized& b) { return a.t < b.t; });
  return out;
}

void write_positions_csv(std::ostream& out, const std::vector<Localized>& fixes) {
  csv::write_row(out, {"cell", "connection", "t_ps", "x_m", "y_m", "residual_rms_m", "loci", "candidates",
                       "degenerate"});
  for (const auto& f : fixes) {
    csv::write_row(out, {f.cell, to_string(f.key), ps(f.t), fmt(f.estimate.position.x), fmt(f.estimate.position.y),
                         fmt(f.estimate.residual_rms), std::to_string(f.loci.size()),
                         std::to_string(f.estimate.candidates.size()), f.estimate.degenerate ? "1" : "0"});
  }
}

// --- tracking --------------------------------------------------------------

TrackResult track(const Scenario& s, const std::vector<Probe>& probes,
                  const std::vector<ExtractionRecord>& extraction, const std::vector<Localized>& fixes) {
  TrackResult out;
  TrackDb& db = out.db;
  const auto primaries = primary_probes(s);

  struct Rec {
    const ConnectionRecord* rec;
    std::string cell;
  };
  std::vector<Rec> recs;
  for (const auto& p : probes) {
    if (std::find(primaries.begin(), primaries.end(), p.config().id) == primaries.end()) continue;
    const std::string cell = s.probe(p.config().id)->cell;
    for (const auto& r : p.records()) recs.push_back({&r, cell});
  }
  std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) { return a.rec->start < b.rec->start; });

  std::map<ConnectionKey, std::vector<const Localized*>> by_key;
  for (const auto& f : fixes) by_key[f.key].push_back(&f);

  const NeighborFn neighbors = [&s](const std::string& a, const std::string& b) {
    const auto adj = [&](const std::string& x, const std::string& y) {
      const EnbSpec* e = s.enb(x);
      return e && std::find(e->neighbors.begin(), e->neighbors.end(), y) != e->neighbors.end();
    };
    return adj(a, b) || adj(b, a);
  };
  const HandoverParams params{s.analysis.handover_max_gap, s.analysis.handover_max_dist_m};
  const auto& db_phones = FingerprintDb::builtin();

  for (const auto& [rec, cell] : recs) {
    const ConnectionKey key = key_of(*rec);
    LinkResult link;
    if (rec->tmsi || rec->random_id || rec->imsi) {
      link = link_connection(db, *rec, extraction, cell);
    } else {
      std::optional<HandoverCandidate> match;
      const auto own = by_key.find(key);
      if (own != by_key.end() && !rec->service_request && !rec->attach_request) {
        std::vector<HandoverCandidate> halted;
        for (const auto& [k, entry] : db.connections()) {
          if (entry.cell == cell || entry.last_seen > rec->start) continue;
          HandoverCandidate c{k, entry.cell, entry.last_seen, std::nullopt};
          if (const auto f = by_key.find(k); f != by_key.end()) c.last_position = f->second.back()->estimate.position;
          halted.push_back(c);
        }
        match = match_handover(*rec, cell, own->second.front()->estimate.position, halted, neighbors, params);
      }
      if (match) {
        link = {db.connection(match->key)->identity, LinkKind::handover};
      } else {
        link = {provisional_id(key), LinkKind::provisional};
      }
      db.record_connection({key, cell, link.identity, link.kind, rec->last_seen});
    }
    if (rec->capabilities) {
      const auto cls = classify(*rec->capabilities, db_phones);
      if (cls.distance == 0 && !cls.tie) db.set_model(link.identity, cls.model, find_hw_error(cls.model, db_phones));
    }
    out.links.emplace_back(key, link);
  }
  for (const auto& f : fixes) {
    if (db.connection(f.key)) db.add_fix({f.key, f.t, f.loci, f.estimate});
  }
  return out;
}

void write_trace_csv(std::ostream& out, const TrackDb& db) {
  csv::write_row(out, {"imsi", "t_ps", "x_m", "y_m", "residual_rms_m", "corrected", "connection"});
  for (const auto& id : db.identities()) {
    for (const auto& p : db.build_trace(id)) {
      csv::write_row(out, {id, ps(p.t), fmt(p.position.x), fmt(p.position.y), fmt(p.residual_rms_m),
                           p.corrected ? "1" : "0", to_string(p.key)});
    }
  }
}

// --- statistics ------------------------------------------------------------

GroupBy group_by_from_string(std::string_view s) {
  if (s == "model") return GroupBy::model;
  if (s == "imsi") return GroupBy::imsi;
  if (s == "connection") return GroupBy::connection;
  throw InvalidArgument("group-by must be model, imsi or connection");
}

std::string_view to_string(GroupBy g) {
  switch (g) {
    case GroupBy::model: return "model";
    case GroupBy::imsi: return "imsi";
    case GroupBy::connection: return "connection";
  }
  return "?";
}

std::vector<ConnectionError> connection_errors(const std::vector<Measurement>& ms,
                                               const std::vector<GroundTruth>& truth, GroupBy group_by) {
  std::map<std::pair<std::uint64_t, std::string>, const GroundTruth*> index;
  for (const auto& g : truth) index[{g.tx_id, g.probe}] = &g;

  struct Acc {
    std::vector<double> meters;
    double actual_sum = 0.0;
    const GroundTruth* first = nullptr;
  };
  std::vector<ConnectionKey> order;
  std::map<ConnectionKey, Acc> acc;
  for (const auto& m : ms) {
    const auto it = index.find({m.tx_id, m.probe});
    if (it == index.end()) continue;
    const ConnectionKey key{m.probe, m.rnti, m.conn_start};
    auto [a, fresh] = acc.try_emplace(key);
    if (fresh) order.push_back(key);
    auto& x = a->second;
    x.meters.push_back(0.5 * m.sum_delay.meters());
    x.actual_sum += 0.5 * it->second->true_sum().meters();
    if (!x.first) x.first = it->second;
  }

  std::vector<ConnectionError> out;
  for (const auto& key : order) {
    const Acc& a = acc.at(key);
    const auto st = connection_stats(a.meters);
    if (!st) continue;
    ConnectionError e;
    e.ue = a.first->ue;
    e.model = a.first->model;
    e.imsi = a.first->imsi.digits();
    e.key = key;
    e.actual_m = a.actual_sum / static_cast<double>(a.meters.size());
    e.stats = *st;
    e.hw_table_m = find_hw_error(e.model, FingerprintDb::builtin());
    switch (group_by) {
      case GroupBy::model: e.group = e.model; break;
      case GroupBy::imsi: e.group = e.imsi; break;
      case GroupBy::connection: e.group = to_string(key); break;
    }
    out.push_back(std::move(e));
  }

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_model;
  for (const auto& e : out) {
    per_model[e.model].first.push_back(e.stats.median_distance_m);
    per_model[e.model].second.push_back(e.actual_m);
  }
  std::map<std::string, double> hw;
  for (const auto& [model, v] : per_model) hw[model] = estimate_hw_error(v.first, v.second);
  for (auto& e : out) {
    e.hw_est_m = hw.at(e.model);
    e.error_m = std::abs(e.stats.median_distance_m - e.actual_m - e.hw_est_m);
  }
  return out;
}

std::vector<GroupSummary> summarize(const std::vector<ConnectionError>& errors) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ConnectionError*>> groups;
  for (const auto& e : errors) {
    auto& g = groups[e.group];
    if (g.empty()) order.push_back(e.group);
    g.push_back(&e);
  }
  std::vector<GroupSummary> out;
  for (const auto& name : order) {
    const auto& g = groups.at(name);
    std::vector<double> err, hw;
    GroupSummary s;
    s.group = name;
    s.connections = g.size();
    for (const auto* e : g) {
      err.push_back(e->error_m);
      hw.push_back(e->hw_est_m);
      s.outliers_removed += e->stats.n_outliers_removed;
    }
    s.median_error_m = median(err);
    s.p90_error_m = percentile_nearest_rank(err, 0.9);
    s.hw_est_m = mean(hw);
    out.push_back(s);
  }
  return out;
}

void write_stats_csv(std::ostream& out, const std::vector<ConnectionError>& errors) {
  csv::write_row(out, {"group", "ue", "model", "imsi", "connection", "actual_m", "median_m", "measurements",
                       "outliers_removed", "iqr_m", "hw_est_m", "hw_table_m", "error_m"});
  for (const auto& e : errors) {
    csv::write_row(out, {e.group, e.ue, e.model, e.imsi, to_string(e.key), fmt(e.actual_m),
                         fmt(e.stats.median_distance_m), std::to_string(e.stats.n_measurements),
                         std::to_string(e.stats.n_outliers_removed), fmt(e.stats.iqr_m), fmt(e.hw_est_m),
                         e.hw_table_m ? fmt(*e.hw_table_m) : "", fmt(e.error_m)});
  }
}

void write_summary_csv(std::ostream& out, const std::vector<GroupSummary>& rows) {
  csv::write_row(out, {"group", "connections", "median_error_m", "p90_error_m", "hw_est_m", "outliers_removed"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.group, std::to_string(r.connections), fmt(r.median_error_m), fmt(r.p90_error_m),
                         fmt(r.hw_est_m), std::to_string(r.outliers_removed)});
  }
}

std::vector<CdfPoint> error_cdf(std::istream& stats_csv, const std::optional<std::string>& group_column) {
  const auto t = csv::Table::parse(stats_csv);
  const std::size_t c_err = t.column("error_m");
  const std::optional<std::size_t> c_group =
      group_column ? std::optional<std::size_t>(t.column(*group_column)) : std::nullopt;
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> groups;
  std::size_t line = 1;
  for (const auto& r : t.rows()) {
    ++line;
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(r[c_err], &used);
      if (used != r[c_err].size() || !std::isfinite(v)) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw InputError("stats line " + std::to_string(line) + ": error_m is not a number: \"" + r[c_err] + "\"");
    }
    const std::string g = c_group ? r[*c_group] : "all";
    auto& vec = groups[g];
    if (vec.empty()) order.push_back(g);
    vec.push_back(v);
  }
  if (order.empty()) throw InputError("stats has no rows");
  std::vector<CdfPoint> out;
  for (const auto& g : order) {
    auto v = groups.at(g);
    std::sort(v.begin(), v.end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back({g, v[i], static_cast<double>(i + 1) / static_cast<double>(v.size())});
    }
  }
  return out;
}

// --- noise calibration -----------------------------------------------------

CalibrationResult calibrate_toa_sigma(ReplicationOptions base, const std::vector<double>& sigmas_m,
                                      const std::vector<std::uint64_t>& seeds, const CalibrationTarget& target) {
  if (sigmas_m.empty() || seeds.empty()) throw InvalidArgument("calibration grid is empty");
  CalibrationResult out;
  for (const double sigma : sigmas_m) {
    CalibrationPoint pt;
    pt.toa_sigma_m = sigma;
    std::size_t n = 0;
    for (const std::uint64_t seed : seeds) {
      base.toa_sigma_m = sigma;
      base.seed = seed;
      const Scenario s = replication_scenario(base);
      const SimResult r = simulate(s);
      const auto ms = all_measurements(replay_probes(s, r.events));
      for (const auto& g : summarize(connection_errors(ms, r.truth, GroupBy::model))) {
        pt.mean_p90_m += g.p90_error_m;
        pt.mean_median_m += g.median_error_m;
        ++n;
      }
    }
    if (n > 0) {
      pt.mean_p90_m /= static_cast<double>(n);
      pt.mean_median_m /= static_cast<double>(n);
    }
    out.points.push_back(pt);
  }
  const auto cost = [&](const CalibrationPoint& p) {
    const double a = (p.mean_p90_m - target.p90_m) / target.p90_tol_m;
    const double b = (p.mean_median_m - target.median_m) / target.median_tol_m;
    return a * a + b * b;
  };
  out.best = *std::min_element(out.points.begin(), out.points.end(),
                               [&](const auto& a, const auto& b) { return cost(a) < cost(b); });
  return out;
}

// --- end to end ------------------------------------------------------------

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::probe: return "probe";
    case Stage::extract: return "extract";
    case Stage::localize: return "localize";
    case Stage::track: return "track";
    case Stage::stats: return "stats";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (const Stage st : all_stages()) {
    if (to_string(st) == s) return st;
  }
  throw InvalidArgument("unknown stage \"" + std::string(s) + "\"");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> kAll = {Stage::simulate, Stage::probe, Stage::extract,
                                          Stage::localize, Stage::track, Stage::stats};
  return kAll;
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InputError(p.string() + ": cannot write");
  return f;
}

std::ifstream open_in(const fs::path& p, Stage needed_by, std::string_view producer) {
  std::ifstream f(p, std::ios::binary);
  if (!f) {
    throw InputError("stage " + std::string(to_string(needed_by)) + " needs " + p.filename().string() + " in " +
                     p.parent_path().string() + " (run the " + std::string(producer) + " stage)");
  }
  return f;
}

/// Artifacts of one run, loaded lazily from disk when their stage is off.
class Run {
 public:
  Run(const Scenario& s, const RunOptions& o, fs::path dir, std::ostream& log)
      : s_(s), o_(o), dir_(std::move(dir)), log_(log) {}

  std::vector<ConnectionError> execute() {
    fs::create_directories(dir_);
    const auto on = [&](Stage st) { return o_.stages.contains(st); };
    if (on(Stage::simulate)) simulate_stage();
    if (on(Stage::probe)) probe_stage();
    if (on(Stage::extract)) extract_stage();
    if (on(Stage::localize)) localize_stage();
    if (on(Stage::track)) track_stage();
    if (on(Stage::stats)) return stats_stage();
    return {};
  }

 private:
  const std::vector<Event>& events(Stage needed_by) {
    if (!events_) {
      auto in = open_in(dir_ / "events.jsonl", needed_by, "simulate");
      events_ = read_jsonl(in);
    }
    return *events_;
  }
  const std::vector<Probe>& probes(Stage needed_by) {
    if (!probes_) probes_ = replay_probes(s_, events(needed_by));
    return *probes_;
  }
  const std::vector<Measurement>& measurements(Stage needed_by) {
    if (!measurements_) {
      auto in = open_in(dir_ / "measurements.csv", needed_by, "probe");
      measurements_ = read_measurements_csv(in);
    }
    return *measurements_;
  }
  const std::vector<ExtractionRecord>& extraction(Stage needed_by) {
    if (!extraction_) {
      auto in = open_in(dir_ / "extraction.jsonl", needed_by, "extract");
      extraction_ = read_extraction_jsonl(in);
    }
    return *extraction_;
  }
  const std::vector<GroundTruth>& truth(Stage needed_by) {
    if (!truth_) {
      auto in = open_in(dir_ / "ground_truth.csv", needed_by, "simulate");
      truth_ = read_ground_truth_csv(in);
    }
    return *truth_;
  }

  void simulate_stage() {
    SimResult r = simulate(s_);
    {
      auto f = open_out(dir_ / "scenario.json");
      f << to_json(s_).dump(2) << '\n';
    }
    {
      auto f = open_out(dir_ / "events.jsonl");
      write_jsonl(f, r.events);
    }
    {
      auto f = open_out(dir_ / "ground_truth.csv");
      write_ground_truth_csv(f, r.truth);
    }
    {
      auto f = open_out(dir_ / "connections.csv");
      write_connections_csv(f, r.connections);
    }
    log_ << "simulate: " << r.events.size() << " events, " << r.connections.size() << " connections\n";
    events_ = std::move(r.events);
    truth_ = std::move(r.truth);
  }

  void probe_stage() {
    const auto& ps = probes(Stage::probe);
    measurements_ = all_measurements(ps);
    {
      auto f = open_out(dir_ / "measurements.csv");
      write_measurements_csv(f, *measurements_);
    }
    {
      auto f = open_out(dir_ / "records.csv");
      write_records_csv(f, ps);
    }
    log_ << "probe: " << measurements_->size() << " measurements\n";
  }

  void extract_stage() {
    extraction_ = replay_extraction(s_, events(Stage::extract));
    auto f = open_out(dir_ / "extraction.jsonl");
    write_extraction_jsonl(f, *extraction_);
    log_ << "extract: " << extraction_->size() << " records\n";
  }

  void localize_stage() {
    fixes_ = localize(s_, measurements(Stage::localize));
    auto f = open_out(dir_ / "positions.csv");
    write_positions_csv(f, *fixes_);
    log_ << "localize: " << fixes_->size() << " fixes\n";
  }

  void track_stage() {
    const auto& ms = measurements(Stage::track);
    const auto& ex = extraction(Stage::track);
    if (!fixes_) fixes_ = localize(s_, ms);
    TrackResult t = tatrack::track(s_, probes(Stage::track), ex, *fixes_);
    {
      auto f = open_out(dir_ / "trace.csv");
      write_trace_csv(f, t.db);
    }
    {
      auto f = open_out(dir_ / "journal.jsonl");
      t.db.write_journal(f);
    }
    log_ << "track: " << t.db.identities().size() << " identities\n";
  }

  std::vector<ConnectionError> stats_stage() {
    auto errors = connection_errors(measurements(Stage::stats), truth(Stage::stats), o_.group_by);
    {
      auto f = open_out(dir_ / "stats.csv");
      write_stats_csv(f, errors);
    }
    {
      auto f = open_out(dir_ / "summary.csv");
      write_summary_csv(f, summarize(errors));
    }
    log_ << "stats: " << errors.size() << " connections\n";
    return errors;
  }

  const Scenario& s_;
  const RunOptions& o_;
  fs::path dir_;
  std::ostream& log_;
  std::optional<std::vector<Event>> events_;
  std::optional<std::vector<Probe>> probes_;
  std::optional<std::vector<Measurement>> measurements_;
  std::optional<std::vector<ExtractionRecord>> extraction_;
  std::optional<std::vector<GroundTruth>> truth_;
  std::optional<std::vector<Localized>> fixes_;
};

}  // namespace

void run_pipeline(const RunOptions& opts, std::ostream& log) {
  if (opts.stages.empty()) throw InvalidArgument("no stage selected");
  if (opts.repeat < 1) throw InvalidArgument("repeat must be at least 1");
  Scenario base = load_scenario(opts.scenario_path);
  if (opts.seed) base.seed = *opts.seed;

  if (opts.repeat == 1) {
    Run(base, opts, opts.out_dir, log).execute();
    return;
  }
  std::vector<ConnectionError> all;
  std::ostringstream merged;
  for (int r = 0; r < opts.repeat; ++r) {
    Scenario s = base;
    s.seed = base.seed + static_cast<std::uint64_t>(r);
    const fs::path dir = opts.out_dir / ("run-" + std::to_string(r + 1));
    log << "run " << r + 1 << " (seed " << s.seed << ")\n";
    auto errors = Run(s, opts, dir, log).execute();
    all.insert(all.end(), errors.begin(), errors.end());
  }
  if (opts.stages.contains(Stage::stats)) {
    fs::create_directories(opts.out_dir);
    auto f = open_out(opts.out_dir / "stats.csv");
    write_stats_csv(f, all);
    auto g = open_out(opts.out_dir / "summary.csv");
    write_summary_csv(g, summarize(all));
  }
}

}  // namespace tatrack

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

#include "tatrack/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <queue>
#include <random>

#include "tatrack/csv.hpp"
#include "tatrack/errors.hpp"
#include "tatrack/fingerprint.hpp"
#include "tatrack/probe.hpp"

namespace tatrack {

namespace {

constexpr Span kSf = TimingConfig::kSubframeLen;
constexpr std::uint16_t kFirstRnti = 0x003D;
constexpr std::uint16_t kLastRnti = 0xFFF3;
constexpr std::uint16_t kAllocCycle = 1000;

// Connection script, in subframes after the preamble.
constexpr int kRarAt = 3;
constexpr int kMsg3At = kRarAt + kMsg3Delay;
constexpr int kSetupAt = 12;
constexpr int kRequestGrantAt = 13;
constexpr int kGrantOffset = 4;
constexpr int kAuthAt = 20;
constexpr int kAuthResendAt = 30;
constexpr int kDataAt = 40;
constexpr int kHandoverDataAt = 12;
constexpr int kTaResendGap = 8;

Instant t_of(std::int64_t n) { return Instant::at(kSf * n); }

SubframeStamp stamp(std::int64_t n, Instant rx, Carrier c) {
  const auto idx = SubframeIndex::from_absolute(n);
  return {idx.frame, idx.subframe, rx, c};
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent generator per (entity, purpose), so adding traffic for one
/// entity leaves every other stream untouched.
class Streams {
 public:
  explicit Streams(std::uint64_t seed) : seed_(seed) {}

  std::mt19937_64& get(const std::string& key) {
    auto it = streams_.find(key);
    if (it == streams_.end()) {
      const std::uint64_t h = fnv1a(key);
      std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                        static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
      it = streams_.emplace(key, std::mt19937_64(seq)).first;
    }
    return it->second;
  }
  double uniform(const std::string& key) { return std::uniform_real_distribution<double>(0.0, 1.0)(get(key)); }

 private:
  std::uint64_t seed_;
  std::map<std::string, std::mt19937_64> streams_;
};

struct TaCmd {
  int adjust = 0;
  int copies = 0;
};

struct Conn {
  std::size_t truth = 0;
  std::size_t ue = 0;
  std::string cell;
  Rnti rnti;
  std::int64_t start_sf = 0;
  ConnTrigger trigger = ConnTrigger::service;
  Span offset;
  int ta_enb = 0;
  int ta_ue = 0;
  std::vector<std::pair<std::int64_t, int>> ue_changes;
  std::optional<TaCmd> pending_ta;
  bool active = true;
  std::int64_t data_slots = 0;
  /// Injection requested by the attacker for the next downlink message.
  std::optional<Message> attack;
  bool suppress_grant = false;
};

struct ProbeState {
  const ProbeSpec* spec = nullptr;
  bool dl = false;
  bool ul = false;
  Span d_enb;
};

struct Attacker {
  std::size_t probe = 0;
  std::set<std::uint32_t> known;
  std::unique_ptr<Probe> live;
  std::unique_ptr<Extractor> extractor;
};

struct Cell {
  const EnbSpec* spec = nullptr;
  std::vector<std::size_t> probes;
  std::optional<std::size_t> attacker;
  std::uint16_t next_rnti = kFirstRnti;
  std::uint16_t next_alloc = 1;
  std::map<std::uint16_t, std::shared_ptr<Conn>> by_rnti;
};

struct UeState {
  const UeSpec* spec = nullptr;
  Span hw_delay;
  CapabilityVector caps;
  std::shared_ptr<Conn> current;
  Instant busy_until;
};

class Engine {
 public:
  explicit Engine(const Scenario& s) : sc_(s), rng_(s.seed) {
    for (const auto& e : s.enbs) cells_[e.id].spec = &e;
    for (std::size_t i = 0; i < s.probes.size(); ++i) {
      const auto& p = s.probes[i];
      Cell& c = cells_.at(p.cell);
      ProbeState ps;
      ps.spec = &p;
      ps.dl = p.role != ProbeRole::ul;
      ps.ul = p.role != ProbeRole::dl;
      ps.d_enb = Span::from_meters(distance(p.position, c.spec->position));
      probes_.push_back(ps);
      c.probes.push_back(i);
      if (p.attacker) {
        c.attacker = attackers_.size();
        attackers_.push_back(make_attacker(i, c));
      }
    }
    const auto& db = FingerprintDb::builtin();
    for (const auto& u : s.ues) {
      UeState st;
      st.spec = &u;
      st.hw_delay = Span::from_meters(2.0 * injected_hw_error_m(s, u));
      const PhoneEntry* e = db.find(u.model);
      st.caps = e ? e->capabilities : unlisted_capabilities(u.model);
      ues_.push_back(std::move(st));
    }
  }

  SimResult run() {
    schedule_sync();
    for (std::size_t i = 0; i < ues_.size(); ++i) schedule_plans(i);
    while (!queue_.empty()) {
      Item item = queue_.top();
      queue_.pop();
      item.fn();
    }
    std::stable_sort(out_.events.begin(), out_.events.end(),
                     [](const Event& a, const Event& b) { return a.stamp.rx_time < b.stamp.rx_time; });
    return std::move(out_);
  }

 private:
  struct Item {
    Instant t;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Item& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };

  void at(Instant t, std::function<void()> fn) { queue_.push({t, seq_++, std::move(fn)}); }
  void at_sf(std::int64_t n, std::function<void()> fn) { at(t_of(n), std::move(fn)); }

  Attacker make_attacker(std::size_t probe_index, const Cell& c) {
    Attacker a;
    a.probe = probe_index;
    const ProbeSpec& p = sc_.probes[probe_index];
    ProbeConfig cfg;
    cfg.id = p.id;
    cfg.position = p.position;
    cfg.enb_position = c.spec->position;
    cfg.ack_gating = sc_.analysis.ack_gating;
    cfg.align_carriers = sc_.analysis.align_carriers;
    cfg.decode_threshold = sc_.analysis.decode_threshold;
    a.live = std::make_unique<Probe>(cfg);
    EngagementPolicy policy;
    policy.mode = sc_.attacker.engagement;
    policy.targets = sc_.attacker.targets;
    policy.service_reject_trigger = sc_.attacker.service_reject_trigger;
    a.extractor = std::make_unique<Extractor>(policy);
    return a;
  }

  /// The policy must see the attacker's own pair store; bind it once the
  /// attacker sits at its final address.
  void bind_attackers() {
    for (auto& [id, cell] : cells_) {
      if (!cell.attacker) continue;
      Attacker& a = attackers_[*cell.attacker];
      EngagementPolicy policy = a.extractor->policy();
      const std::set<std::uint32_t>* known = &a.known;
      policy.is_known = [known](Tmsi t) { return known->contains(t.value); };
      a.extractor = std::make_unique<Extractor>(policy);
      Cell* cp = &cell;
      Attacker* ap = &a;
      a.live->set_observer([this, cp, ap](const ConnectionRecord& rec, const Event& e) {
        on_attacker_capture(*cp, *ap, rec, e);
      });
    }
  }

  void on_attacker_capture(Cell& c, Attacker& a, const ConnectionRecord& rec, const Event& e) {
    if (e.direction == Direction::tx || !e.msg) return;
    if (std::holds_alternative<RandomAccessResponse>(*e.msg)) a.extractor->reset(rec.rnti);
    const auto actions = a.extractor->on_message(rec.rnti, *e.msg);
    const auto it = c.by_rnti.find(rec.rnti.value);
    for (const auto& act : actions) {
      if (const auto* o = std::get_if<Overshadow>(&act)) {
        if (it != c.by_rnti.end()) it->second->attack = o->msg;
      } else if (std::holds_alternative<SuppressUplinkGrant>(act)) {
        if (it != c.by_rnti.end()) it->second->suppress_grant = true;
      } else if (const auto* p = std::get_if<RecordPair>(&act)) {
        if (p->tmsi) a.known.insert(p->tmsi->value);
      }
    }
  }

  // --- captures -----------------------------------------------------------

  void deliver(std::size_t probe, Event e) {
    const Instant t = e.stamp.rx_time;
    at(t, [this, probe, e = std::move(e)] {
      out_.events.push_back(e);
      const ProbeSpec& p = sc_.probes[probe];
      if (p.attacker) {
        Attacker& a = attackers_[*cells_.at(p.cell).attacker];
        a.live->ingest(e);
      }
    });
  }

  void schedule_sync() {
    bind_attackers();
    for (std::size_t i = 0; i < probes_.size(); ++i) {
      const ProbeState& p = probes_[i];
      for (int n = 0; n < TimingConfig::kSubframesPerFrame; ++n) {
        const Instant dl_rx = t_of(n) + p.d_enb;
        if (p.dl) deliver(i, Event{p.spec->id, stamp(n, dl_rx, Carrier::downlink), Direction::rx, 0, 0, {}});
        if (p.ul) {
          deliver(i, Event{p.spec->id, stamp(n, dl_rx + p.spec->ul_clock_offset, Carrier::uplink), Direction::rx,
                           0, 0, {}});
        }
      }
    }
  }

  std::uint16_t alloc(Cell& c) {
    const std::uint16_t a = c.next_alloc;
    c.next_alloc = static_cast<std::uint16_t>(c.next_alloc % kAllocCycle + 1);
    return a;
  }

  /// Network downlink in subframe n, captured by every downlink probe of the
  /// cell.
  void downlink(Cell& c, std::int64_t n, const Message& m, std::uint16_t alloc) {
    const bool grant = std::holds_alternative<DciFormat0>(m);
    for (const std::size_t i : c.probes) {
      const ProbeState& p = probes_[i];
      if (!p.dl) continue;
      if (grant && sc_.faults.grant_loss_prob > 0 &&
          rng_.uniform("grant_loss/" + p.spec->id) < sc_.faults.grant_loss_prob) {
        continue;
      }
      deliver(i, Event{p.spec->id, stamp(n, t_of(n) + p.d_enb, Carrier::downlink), Direction::rx, alloc, 0, m});
    }
  }

  /// Attacker transmission in subframe n; only the attacker logs it.
  void inject(Cell& c, std::int64_t n, const Message& m, std::uint16_t alloc) {
    const ProbeState& p = probes_[attackers_[*c.attacker].probe];
    deliver(attackers_[*c.attacker].probe,
            Event{p.spec->id, stamp(n, t_of(n) + p.d_enb, Carrier::downlink), Direction::tx, alloc, 0, m});
  }

  int ue_ta_at(Conn& k, std::int64_t n) {
    auto& ch = k.ue_changes;
    std::stable_sort(ch.begin(), ch.end());
    auto it = ch.begin();
    for (; it != ch.end() && it->first <= n; ++it) {
      k.ta_ue = std::clamp(k.ta_ue + it->second, 0, static_cast<int>(kMaxTaIndex));
    }
    ch.erase(ch.begin(), it);
    return k.ta_ue;
  }

  Position ue_position(const Conn& k, std::int64_t n) const { return position_at(*ues_[k.ue].spec, t_of(n)); }

  Span d_ue(const Conn& k, std::int64_t n) const {
    return Span::from_meters(distance(ue_position(k, n), cells_.at(k.cell).spec->position));
  }

  /// TA index the eNodeB derives from the UE's current round trip.
  int needed_ta(const Conn& k, std::int64_t n) const {
    const Span rt = d_ue(k, n) * 2 + ues_[k.ue].hw_delay + k.offset;
    if (rt <= Span{}) return 0;
    const std::int64_t idx = detail::round_half_up(rt.ticks() * kTaStepDen, kTaStepNum);
    return static_cast<int>(std::min<std::int64_t>(idx, kMaxTaIndex));
  }

  /// UE uplink in subframe n, captured by every uplink probe of the cell.
  void uplink(Conn& k, std::int64_t n, const Message& m, std::uint16_t alloc) {
    UeState& u = ues_[k.ue];
    Cell& c = cells_.at(k.cell);
    const Instant tn = t_of(n);
    const Position pos = ue_position(k, n);
    const Span due = Span::from_meters(distance(pos, c.spec->position));
    const bool preamble = std::holds_alternative<RandomAccessPreamble>(m);
    const int ta = ue_ta_at(k, n);
    const Span advance = preamble ? Span{} : ta_span(TaIndex(ta)) - k.offset;
    const Instant tx = preamble ? apply_random_offset(tn + due + u.hw_delay, k.offset)
                                : tn + due - advance + u.hw_delay;
    const std::uint64_t id = preamble ? 0 : ++tx_counter_;
    for (const std::size_t i : c.probes) {
      const ProbeState& p = probes_[i];
      if (!p.ul) continue;
      const Span dul = Span::from_meters(distance(pos, p.spec->position));
      Span noise;
      if (sc_.noise.toa_sigma > Span{}) {
        std::normal_distribution<double> g(0.0, static_cast<double>(sc_.noise.toa_sigma.ticks()));
        noise = Span::ps(std::llround(g(rng_.get("toa/" + p.spec->id + "/" + u.spec->id))));
      }
      const Instant rx = tx + dul + noise + p.spec->ul_clock_offset;
      if (!preamble) {
        GroundTruth g;
        g.tx_id = id;
        g.probe = p.spec->id;
        g.ue = u.spec->id;
        g.model = u.spec->model;
        g.imsi = u.spec->imsi;
        g.cell = k.cell;
        g.rnti = k.rnti;
        g.t = tn;
        g.position = pos;
        g.d_ue = due;
        g.d_ul = dul;
        g.ta_ue = TaIndex(ta);
        g.offset = k.offset;
        g.hw_delay = u.hw_delay;
        g.message = std::string(message_name(m));
        out_.truth.push_back(std::move(g));
      }
      deliver(i, Event{p.spec->id, stamp(n, rx, Carrier::uplink), Direction::rx, alloc, id, m});
    }
  }

  // --- connections --------------------------------------------------------

  void schedule_plans(std::size_t ui) {
    const UeSpec& u = *ues_[ui].spec;
    std::vector<ConnectionPlan> plans = u.connections;
    if (plans.empty() && u.reconnect_rate > 0) {
      std::exponential_distribution<double> gap(u.reconnect_rate / 60.0);
      double t = 0;
      auto& g = rng_.get("reconnect/" + u.id);
      for (;;) {
        t += gap(g);
        if (t >= sc_.duration.seconds()) break;
        ConnectionPlan p;
        p.t = Instant::at(Span::from_seconds(t));
        p.trigger = u.tmsi ? ConnTrigger::service : ConnTrigger::attach;
        plans.push_back(p);
      }
    }
    for (const auto& p : plans) {
      at(p.t, [this, ui, p] { start_connection(ui, p); });
    }
  }

  std::string serving_cell(const UeState& u, const ConnectionPlan& p) const {
    if (p.cell) return *p.cell;
    const Position pos = position_at(*u.spec, p.t);
    const auto it = std::min_element(sc_.enbs.begin(), sc_.enbs.end(), [&](const EnbSpec& a, const EnbSpec& b) {
      return distance(pos, a.position) < distance(pos, b.position);
    });
    return it->id;
  }

  void start_connection(std::size_t ui, const ConnectionPlan& plan) {
    UeState& u = ues_[ui];
    const std::int64_t s = detail::floor_div(plan.t.ticks() + kSf.ticks() - 1, kSf.ticks());
    std::optional<std::size_t> from;
    if (plan.trigger == ConnTrigger::handover) {
      if (!u.current || !u.current->active) return;
      u.current->active = false;
      out_.connections[u.current->truth].end = t_of(s);
      from = u.current->truth;
    } else if (t_of(s) < u.busy_until) {
      return;
    }

    auto k = std::make_shared<Conn>();
    k->ue = ui;
    k->cell = serving_cell(u, plan);
    k->start_sf = s;
    k->trigger = plan.trigger;
    if (sc_.countermeasure.random_offset) {
      std::uniform_int_distribution<std::int64_t> d(0, sc_.countermeasure.max_offset.ticks());
      k->offset = Span::ps(d(rng_.get("offset/" + u.spec->id)));
    }
    const Span data = plan.data_duration.value_or(sc_.traffic.ul_period * sc_.traffic.ul_per_connection);
    k->data_slots = std::max<std::int64_t>(1, data.ticks() / sc_.traffic.ul_period.ticks());

    ConnectionTruth ct;
    ct.ue = u.spec->id;
    ct.model = u.spec->model;
    ct.imsi = u.spec->imsi;
    ct.tmsi = u.spec->tmsi;
    ct.cell = k->cell;
    ct.trigger = plan.trigger;
    ct.start = t_of(s);
    ct.start_position = ue_position(*k, s);
    ct.offset = k->offset;
    ct.handover_from = from;
    ct.outcome = plan.trigger == ConnTrigger::attach && !u.spec->tmsi ? ExtractionOutcome::imsi_in_clear
                                                                      : ExtractionOutcome::not_engaged;
    k->truth = out_.connections.size();
    out_.connections.push_back(ct);

    const std::int64_t first_data = s + (plan.trigger == ConnTrigger::handover ? kHandoverDataAt : kDataAt);
    const std::int64_t period = std::max<std::int64_t>(1, sc_.traffic.ul_period.ticks() / kSf.ticks());
    const std::int64_t last_ul = first_data + (k->data_slots - 1) * period + kGrantOffset;
    out_.connections[k->truth].end = t_of(last_ul);
    u.busy_until = t_of(last_ul + 1);
    u.current = k;

    uplink(*k, s, RandomAccessPreamble{static_cast<std::uint8_t>(fnv1a(u.spec->id + std::to_string(s)) % 64)}, 0);
    at_sf(s + kRarAt, [this, k] { on_rar(k); });
  }

  void on_rar(const std::shared_ptr<Conn>& k) {
    if (!k->active) return;
    Cell& c = cells_.at(k->cell);
    k->rnti = Rnti{c.next_rnti};
    c.next_rnti = c.next_rnti == kLastRnti ? kFirstRnti : static_cast<std::uint16_t>(c.next_rnti + 1);
    c.by_rnti[k->rnti.value] = k;
    out_.connections[k->truth].rnti = k->rnti;
    // The preamble round trip is measured at the preamble subframe.
    k->ta_enb = k->ta_ue = needed_ta(*k, k->start_sf);
    const std::uint16_t a3 = alloc(c);
    const std::int64_t n = k->start_sf + kRarAt;
    downlink(c, n, RandomAccessResponse{k->rnti, TaIndex(k->ta_enb), UlGrant{a3, 4}}, 0);
    at_sf(k->start_sf + kMsg3At, [this, k, a3] { on_msg3(k, a3); });
  }

  void on_msg3(const std::shared_ptr<Conn>& k, std::uint16_t a3) {
    if (!k->active) return;
    const UeSpec& u = *ues_[k->ue].spec;
    const std::int64_t n = k->start_sf + kMsg3At;
    if (k->trigger == ConnTrigger::handover) {
      uplink(*k, n, UplinkData{64}, a3);
      start_data(k, k->start_sf + kHandoverDataAt);
      return;
    }
    RrcConnectionRequest req;
    if (u.tmsi) {
      req.tmsi_or_random = *u.tmsi;
    } else {
      req.has_tmsi = false;
      req.tmsi_or_random = Tmsi{static_cast<std::uint32_t>(rng_.get("random_id/" + u.id)())};
    }
    req.establishment_cause = k->trigger == ConnTrigger::attach ? 4 : 3;
    uplink(*k, n, req, a3);
    at_sf(k->start_sf + kSetupAt, [this, k] { on_setup(k); });
  }

  void on_setup(const std::shared_ptr<Conn>& k) {
    if (!k->active) return;
    Cell& c = cells_.at(k->cell);
    const std::int64_t n = k->start_sf + kSetupAt;
    const std::uint16_t a4 = alloc(c);
    downlink(c, n, DciFormat1{k->rnti, a4, 9}, 0);
    downlink(c, n, RrcConnectionSetup{1}, a4);
    at_sf(k->start_sf + kRequestGrantAt, [this, k] {
      if (!k->active) return;
      Cell& cc = cells_.at(k->cell);
      const std::uint16_t a5 = alloc(cc);
      downlink(cc, k->start_sf + kRequestGrantAt, DciFormat0{k->rnti, kGrantOffset, a5, 9}, 0);
      at_sf(k->start_sf + kRequestGrantAt + kGrantOffset, [this, k, a5] { on_request(k, a5); });
    });
  }

  void on_request(const std::shared_ptr<Conn>& k, std::uint16_t a5) {
    if (!k->active) return;
    const UeState& u = ues_[k->ue];
    const std::int64_t n = k->start_sf + kRequestGrantAt + kGrantOffset;
    if (k->trigger == ConnTrigger::attach) {
      AttachRequest req;
      if (u.spec->tmsi) {
        req.id = *u.spec->tmsi;
      } else {
        req.id = u.spec->imsi;
      }
      req.capabilities = u.caps;
      uplink(*k, n, req, a5);
    } else {
      uplink(*k, n, ServiceRequest{*u.spec->tmsi}, a5);
    }
    at_sf(k->start_sf + kAuthAt, [this, k] { on_auth(k); });
  }

  double margin_db(const Conn& k, const Cell& c, std::int64_t n) const {
    const Position ue = ue_position(k, n);
    const ProbeSpec& att = sc_.probes[attackers_[*c.attacker].probe];
    const double d_att = std::max(1.0, distance(ue, att.position));
    const double d_enb = std::max(1.0, distance(ue, c.spec->position));
    return (att.tx_power_db - 20.0 * std::log10(d_att)) - (c.spec->tx_power_db - 20.0 * std::log10(d_enb));
  }

  /// The network's authentication request, possibly overshadowed.
  void on_auth(const std::shared_ptr<Conn>& k) {
    if (!k->active) return;
    Cell& c = cells_.at(k->cell);
    const UeState& u = ues_[k->ue];
    auto& truth = out_.connections[k->truth];
    const std::int64_t n = k->start_sf + kAuthAt;
    const std::uint16_t a_dl = alloc(c);
    const std::uint16_t a_ul = alloc(c);
    downlink(c, n, DciFormat1{k->rnti, a_dl, 9}, 0);
    downlink(c, n, OpaqueNas{OpaqueKind::authentication, 36}, a_dl);
    downlink(c, n, DciFormat0{k->rnti, kGrantOffset, a_ul, 9}, 0);

    bool answered_auth = true;
    if (k->attack && c.attacker) {
      truth.engaged = true;
      const std::uint16_t a_att = k->suppress_grant ? alloc(c) : a_ul;
      inject(c, n, DciFormat1{k->rnti, a_dl, 9}, 0);
      inject(c, n, *k->attack, a_dl);
      if (k->suppress_grant) inject(c, n, DciFormat0{k->rnti, kGrantOffset, a_att, 9}, 0);

      const ProbeSpec& att = sc_.probes[attackers_[*c.attacker].probe];
      const Position ue = ue_position(*k, n);
      Span align = Span::from_meters(distance(ue, att.position)) - Span::from_meters(distance(ue, c.spec->position));
      if (sc_.attacker.alignment_jitter > Span{}) {
        const auto j = sc_.attacker.alignment_jitter.ticks();
        align += Span::ps(std::uniform_int_distribution<std::int64_t>(-j, j)(rng_.get("align/" + att.id)));
      }
      const double margin = margin_db(*k, c, n);
      truth.overshadow_margin_db = margin;
      if (overshadow_outcome(margin, align) == OvershadowOutcome::replaced) {
        answered_auth = false;
        const std::int64_t r = n + kGrantOffset;
        if (std::holds_alternative<ServiceReject>(*k->attack)) {
          AttachRequest again;
          again.id = u.spec->imsi;
          again.capabilities = u.caps;
          at_sf(r, [this, k, again, a_att] {
            if (k->active) uplink(*k, k->start_sf + kAuthAt + kGrantOffset, again, a_att);
          });
          truth.outcome = ExtractionOutcome::imsi_obtained;
        } else if (k->trigger == ConnTrigger::attach || u.spec->answers_identity_after_service_request) {
          const Imsi imsi = u.spec->imsi;
          at_sf(r, [this, k, imsi, a_att] {
            if (k->active) uplink(*k, k->start_sf + kAuthAt + kGrantOffset, IdentityResponse{imsi}, a_att);
          });
          truth.outcome = ExtractionOutcome::imsi_obtained;
        } else {
          truth.outcome = ExtractionOutcome::no_response;
        }
      } else {
        truth.outcome = ExtractionOutcome::overshadow_failed;
      }
    }
    k->attack.reset();
    k->suppress_grant = false;

    if (answered_auth) {
      at_sf(n + kGrantOffset, [this, k, a_ul] {
        if (!k->active) return;
        uplink(*k, k->start_sf + kAuthAt + kGrantOffset, OpaqueNas{OpaqueKind::authentication, 16}, a_ul);
      });
    } else {
      // No answer reached the network; it repeats the challenge.
      at_sf(k->start_sf + kAuthResendAt, [this, k] {
        if (!k->active) return;
        Cell& cc = cells_.at(k->cell);
        const std::int64_t m = k->start_sf + kAuthResendAt;
        const std::uint16_t d = alloc(cc);
        const std::uint16_t g = alloc(cc);
        downlink(cc, m, DciFormat1{k->rnti, d, 9}, 0);
        downlink(cc, m, OpaqueNas{OpaqueKind::authentication, 36}, d);
        downlink(cc, m, DciFormat0{k->rnti, kGrantOffset, g, 9}, 0);
        at_sf(m + kGrantOffset, [this, k, m, g] {
          if (k->active) uplink(*k, m + kGrantOffset, OpaqueNas{OpaqueKind::authentication, 16}, g);
        });
      });
    }
    start_data(k, k->start_sf + kDataAt);
  }

  void start_data(const std::shared_ptr<Conn>& k, std::int64_t first) {
    const std::int64_t period = std::max<std::int64_t>(1, sc_.traffic.ul_period.ticks() / kSf.ticks());
    for (std::int64_t i = 0; i < k->data_slots; ++i) {
      const std::int64_t n = first + i * period;
      const bool last = i + 1 == k->data_slots;
      at_sf(n, [this, k, n, last] { on_data_slot(k, n, last); });
    }
  }

  void on_data_slot(const std::shared_ptr<Conn>& k, std::int64_t n, bool last) {
    if (!k->active) return;
    Cell& c = cells_.at(k->cell);
    maintain_ta(k, n);
    const std::uint16_t a = alloc(c);
    downlink(c, n, DciFormat0{k->rnti, kGrantOffset, a, 9}, 0);
    at_sf(n + kGrantOffset, [this, k, n, a, last] {
      if (!k->active) return;
      uplink(*k, n + kGrantOffset, UplinkData{256}, a);
      if (last) k->active = false;
    });
  }

  void maintain_ta(const std::shared_ptr<Conn>& k, std::int64_t n) {
    if (k->pending_ta) return;
    const int diff = needed_ta(*k, n) - k->ta_enb;
    if (diff == 0) return;
    k->pending_ta = TaCmd{std::clamp(diff, -31, 32), 0};
    send_ta(k, n);
  }

  void send_ta(const std::shared_ptr<Conn>& k, std::int64_t n) {
    if (!k->active || !k->pending_ta) return;
    Cell& c = cells_.at(k->cell);
    const UeState& u = ues_[k->ue];
    const std::uint16_t a = alloc(c);
    const int adjust = k->pending_ta->adjust;
    downlink(c, n, DciFormat1{k->rnti, a, 0}, 0);
    downlink(c, n, MacTaCommand{static_cast<std::int8_t>(adjust)}, a);
    const double p_loss = sc_.faults.ta_resend_prob;
    const bool lost = p_loss > 0 && rng_.uniform("ta_loss/" + u.spec->id) < p_loss;
    out_.ta_commands.push_back({u.spec->id, k->cell, k->rnti, t_of(n), adjust, lost, k->pending_ta->copies});
    if (lost) {
      ++k->pending_ta->copies;
      at_sf(n + kTaResendGap, [this, k, n] { send_ta(k, n + kTaResendGap); });
      return;
    }
    k->ue_changes.emplace_back(n + kTaDelaySubframes, adjust);
    const auto harq = static_cast<std::uint8_t>(SubframeIndex::from_absolute(n).cyclic() % 8);
    at_sf(n + kHarqFeedbackDelay, [this, k, n, a, harq, adjust] {
      if (k->active) uplink(*k, n + kHarqFeedbackDelay, Ack{harq}, a);
      k->ta_enb = std::clamp(k->ta_enb + adjust, 0, static_cast<int>(kMaxTaIndex));
      k->pending_ta.reset();
    });
  }

  const Scenario& sc_;
  Streams rng_;
  std::map<std::string, Cell> cells_;
  std::vector<ProbeState> probes_;
  std::vector<Attacker> attackers_;
  std::vector<UeState> ues_;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t tx_counter_ = 0;
  SimResult out_;
};

std::string ps_str(Span s) { return std::to_string(s.ticks()); }
std::string ps_str(Instant t) { return std::to_string(t.ticks()); }

std::string num_str(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Instant apply_random_offset(Instant ue_tx, Span offset) {
  if (offset < Span{}) throw InvalidArgument("random offset must not be negative");
  return ue_tx + offset;
}

double injected_hw_error_m(const Scenario& s, const UeSpec& ue) {
  if (!s.noise.hw_bias) return 0.0;
  if (ue.hw_error_m) return *ue.hw_error_m;
  return find_hw_error(ue.model, FingerprintDb::builtin()).value_or(0.0);
}

SimResult simulate(const Scenario& scenario) {
  validate(scenario);
  Engine e(scenario);
  return e.run();
}

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruth>& rows) {
  csv::write_row(out, {"tx_id", "probe", "ue", "model", "imsi", "cell", "rnti", "t_ps", "x_m", "y_m", "d_ue_ps",
                       "d_ul_ps", "ta_ue", "offset_ps", "hw_delay_ps", "message"});
  for (const auto& g : rows) {
    csv::write_row(out, {std::to_string(g.tx_id), g.probe, g.ue, g.model, g.imsi.digits(), g.cell,
                         std::to_string(g.rnti.value), ps_str(g.t), num_str(g.position.x), num_str(g.position.y),
                         ps_str(g.d_ue), ps_str(g.d_ul), std::to_string(g.ta_ue.value()), ps_str(g.offset),
                         ps_str(g.hw_delay), g.message});
  }
}

std::vector<GroundTruth> read_ground_truth_csv(std::istream& in) {
  const auto t = csv::Table::parse(in);
  const auto col = [&](std::string_view n) { return t.column(n); };
  const std::size_t c_tx = col("tx_id"), c_probe = col("probe"), c_ue = col("ue"), c_model = col("model"),
                    c_imsi = col("imsi"), c_cell = col("cell"), c_rnti = col("rnti"), c_t = col("t_ps"),
                    c_x = col("x_m"), c_y = col("y_m"), c_due = col("d_ue_ps"), c_dul = col("d_ul_ps"),
                    c_ta = col("ta_ue"), c_off = col("offset_ps"), c_hw = col("hw_delay_ps"), c_msg = col("message");
  std::vector<GroundTruth> out;
  std::size_t line = 1;
  for (const auto& r : t.rows()) {
    ++line;
    try {
      GroundTruth g;
      g.tx_id = std::stoull(r[c_tx]);
      g.probe = r[c_probe];
      g.ue = r[c_ue];
      g.model = r[c_model];
      g.imsi = Imsi(r[c_imsi]);
      g.cell = r[c_cell];
      g.rnti = Rnti{static_cast<std::uint16_t>(std::stoul(r[c_rnti]))};
      g.t = Instant::from_ps(std::stoll(r[c_t]));
      g.position = {std::stod(r[c_x]), std::stod(r[c_y])};
      g.d_ue = Span::ps(std::stoll(r[c_due]));
      g.d_ul = Span::ps(std::stoll(r[c_dul]));
      g.ta_ue = TaIndex(std::stoi(r[c_ta]));
      g.offset = Span::ps(std::stoll(r[c_off]));
      g.hw_delay = Span::ps(std::stoll(r[c_hw]));
      g.message = r[c_msg];
      out.push_back(std::move(g));
    } catch (const std::exception& e) {
      throw InputError("ground truth line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

void write_connections_csv(std::ostream& out, const std::vector<ConnectionTruth>& rows) {
  csv::write_row(out, {"ue", "model", "imsi", "tmsi", "cell", "rnti", "trigger", "start_ps", "end_ps", "x_m", "y_m",
                       "offset_ps", "engaged", "outcome", "margin_db", "handover_from"});
  for (const auto& c : rows) {
    csv::write_row(out, {c.ue, c.model, c.imsi.digits(), c.tmsi ? std::to_string(c.tmsi->value) : "", c.cell,
                         std::to_string(c.rnti.value), std::string(to_string(c.trigger)), ps_str(c.start),
                         ps_str(c.end), num_str(c.start_position.x), num_str(c.start_position.y), ps_str(c.offset),
                         c.engaged ? "1" : "0", std::string(to_string(c.outcome)),
                         c.overshadow_margin_db ? num_str(*c.overshadow_margin_db) : "",
                         c.handover_from ? std::to_string(*c.handover_from) : ""});
  }
}

Scenario replication_scenario(const ReplicationOptions& opts) {
  Scenario s;
  s.name = "replication";
  s.seed = opts.seed;
  s.enbs.push_back({"enb1", {0.0, 0.0}, 30.0, {}});
  ProbeSpec p;
  p.id = "probe1";
  p.position = {0.0, 0.0};
  p.role = ProbeRole::both;
  p.cell = "enb1";
  p.attacker = true;
  p.tx_power_db = 40.0;
  s.probes.push_back(p);
  s.noise.toa_sigma = Span::from_meters(2.0 * opts.toa_sigma_m);
  s.noise.hw_bias = true;

  // UEs start 37 ms apart so that no two connections share a subframe.
  std::size_t index = 0;
  Span latest;
  for (std::size_t m = 0; m < opts.models.size(); ++m) {
    for (std::size_t d = 0; d < opts.distances_m.size(); ++d, ++index) {
      UeSpec u;
      u.id = "ue" + std::to_string(index + 1);
      u.model = opts.models[m];
      char imsi[16];
      std::snprintf(imsi, sizeof imsi, "00101%010zu", index + 1);
      u.imsi = Imsi(imsi);
      u.tmsi = Tmsi{static_cast<std::uint32_t>(0x10000000u + index)};
      u.waypoints.push_back({Instant{}, {opts.distances_m[d], 0.0}});
      for (int k = 0; k < opts.connections_per_distance; ++k) {
        ConnectionPlan plan;
        plan.t = Instant::at(Span::s(1) + Span::ms(37) * static_cast<std::int64_t>(index) + opts.spacing * k);
        plan.trigger = k == 0 ? ConnTrigger::attach : ConnTrigger::service;
        latest = std::max(latest, plan.t.since_epoch());
        u.connections.push_back(plan);
      }
      s.ues.push_back(std::move(u));
    }
  }
  s.duration = latest + Span::s(2);
  return s;
}

}  // namespace tatrack

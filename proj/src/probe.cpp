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

#include "tatrack/probe.hpp"

#include <algorithm>
#include <cstdlib>

namespace tatrack {

namespace {

constexpr Span kSubframe = TimingConfig::kSubframeLen;
/// DL assignments are kept long enough to attribute HARQ feedback (n + 4).
constexpr Span kAssignmentMemory = Span::ms(16);

SubframeIndex shifted(SubframeIndex idx, std::int64_t k) {
  return SubframeIndex::from_absolute(idx.cyclic() + k);
}

std::uint8_t harq_of(SubframeIndex idx) { return static_cast<std::uint8_t>(idx.cyclic() % 8); }

template <typename Fn>
void for_shared(std::span<const SubframeStamp> dl, std::span<const SubframeStamp> ul, Fn&& fn) {
  for (const auto& d : dl) {
    for (const auto& u : ul) {
      if (d.frame == u.frame && d.subframe == u.subframe) fn(d, u);
    }
  }
}

}  // namespace

std::string_view to_string(ConnState s) {
  switch (s) {
    case ConnState::active: return "active";
    case ConnState::halted: return "halted";
    case ConnState::closed: return "closed";
  }
  return "?";
}

Span align_carriers(std::span<const SubframeStamp> dl, std::span<const SubframeStamp> ul) {
  __extension__ __int128 total = 0;
  std::int64_t n = 0;
  for_shared(dl, ul, [&](const SubframeStamp& d, const SubframeStamp& u) {
    total += (d.rx_time - u.rx_time).ticks();
    ++n;
  });
  if (n == 0) throw InvalidArgument("no shared subframe index between carriers");
  return Span::ps(static_cast<std::int64_t>(total / n));
}

Span residual_misalignment(std::span<const SubframeStamp> dl, std::span<const SubframeStamp> ul,
                           Span correction) {
  std::int64_t worst = 0;
  for_shared(dl, ul, [&](const SubframeStamp& d, const SubframeStamp& u) {
    worst = std::max(worst, std::abs((d.rx_time - (u.rx_time + correction)).ticks()));
  });
  return Span::ps(worst);
}

Instant infer_t_n(Instant dl_rx, Span d_dlprobe) { return dl_rx - d_dlprobe; }

bool decodable(Span misalignment, Span threshold) {
  return std::abs(misalignment.ticks()) < threshold.ticks();
}

Probe::Probe(ProbeConfig config)
    : config_(std::move(config)),
      d_dlprobe_(Span::from_meters(distance(config_.position, config_.enb_position))) {}

const ConnectionRecord* Probe::find(Rnti rnti) const {
  const auto it = live_.find(rnti.value);
  return it == live_.end() ? nullptr : &records_[it->second.index];
}

Probe::Live* Probe::live(Rnti rnti) {
  const auto it = live_.find(rnti.value);
  return it == live_.end() ? nullptr : &it->second;
}

void Probe::advance_to(Instant now) {
  for (auto it = live_.begin(); it != live_.end();) {
    auto& rec = records_[it->second.index];
    const Span silence = now - rec.last_seen;
    if (silence > config_.close_after) {
      rec.state = ConnState::closed;
      it = live_.erase(it);
      continue;
    }
    if (silence > config_.halt_after) rec.state = ConnState::halted;
    ++it;
  }
}

std::vector<Measurement> Probe::ingest(const Event& e) {
  if (e.is_sync()) {
    on_sync(e);
    return {};
  }
  advance_to(e.stamp.rx_time);
  if (e.stamp.carrier == Carrier::downlink) {
    on_downlink(e);
    return {};
  }
  return on_uplink(e);
}

void Probe::on_sync(const Event& e) {
  (e.stamp.carrier == Carrier::downlink ? sync_dl_ : sync_ul_).push_back(e.stamp);
  if (sync_dl_.empty() || sync_ul_.empty()) return;
  bool shared = false;
  for_shared(sync_dl_, sync_ul_, [&](const auto&, const auto&) { shared = true; });
  if (!shared) return;
  const Span raw = align_carriers(sync_dl_, sync_ul_);
  ul_correction_ = config_.align_carriers ? raw : Span{};
  misalignment_ = residual_misalignment(sync_dl_, sync_ul_, ul_correction_);
}

Instant Probe::t_n_of(SubframeIndex idx) const {
  if (!t_ref_) return Instant{};
  return t_ref_->second + kSubframe * subframe_distance(t_ref_->first, idx);
}

ConnectionRecord& Probe::open_record(Rnti rnti, Instant t) {
  if (auto* old = live(rnti)) {
    records_[old->index].state = ConnState::halted;
    live_.erase(rnti.value);
  }
  ConnectionRecord rec;
  rec.probe = config_.id;
  rec.rnti = rnti;
  rec.start = t;
  rec.last_seen = t;
  records_.push_back(std::move(rec));
  live_[rnti.value] = Live{records_.size() - 1, {}, {}};
  return records_.back();
}

void Probe::touch(Live& l, Instant t) {
  auto& rec = records_[l.index];
  rec.last_seen = std::max(rec.last_seen, t);
  if (rec.state == ConnState::halted) rec.state = ConnState::active;
}

void Probe::schedule_ta(Live& l, int adjust, Instant effective) {
  l.scheduled.push_back({effective, adjust});
  std::stable_sort(l.scheduled.begin(), l.scheduled.end(),
                   [](const Scheduled& a, const Scheduled& b) { return a.effective < b.effective; });
}

void Probe::apply_due(Live& l, Instant upto) {
  auto& rec = records_[l.index];
  auto it = l.scheduled.begin();
  for (; it != l.scheduled.end() && it->effective <= upto; ++it) {
    int next = rec.ta_current.value() + it->adjust;
    if (next < 0 || next > kMaxTaIndex) {
      ++counters_.ta_clamped;
      next = std::clamp(next, 0, static_cast<int>(kMaxTaIndex));
    }
    rec.ta_current = TaIndex(next);
    rec.ta_history.push_back({it->effective, rec.ta_current});
  }
  l.scheduled.erase(l.scheduled.begin(), it);
}

void Probe::notify(const Live& l, const Event& e) {
  if (observer_) observer_(records_[l.index], e);
}

void Probe::on_downlink(const Event& e) {
  const SubframeIndex idx = e.stamp.index();
  if (e.direction == Direction::rx) {
    t_ref_ = {idx, infer_t_n(e.stamp.rx_time, d_dlprobe_)};
  }
  const Instant tn = t_n_of(idx);
  std::erase_if(dl_assignments_, [&](const DlAssignment& a) { return tn - a.t > kAssignmentMemory; });
  const Message& msg = *e.msg;

  if (const auto* rar = std::get_if<RandomAccessResponse>(&msg)) {
    if (!rar->rnti.is_dedicated()) {
      ++counters_.unknown_rnti;
      return;
    }
    auto& rec = open_record(rar->rnti, e.stamp.rx_time);
    rec.ta_initial = rar->ta;
    rec.ta_current = rar->ta;
    rec.ta_history.push_back({tn, rar->ta});
    rec.pending_grants.push_back(
        {shifted(idx, kMsg3Delay), tn + kSubframe * kMsg3Delay, rar->ul_grant.rb_alloc});
    notify(*live(rar->rnti), e);
    return;
  }
  if (const auto* dci = std::get_if<DciFormat0>(&msg)) {
    Live* l = live(dci->rnti);
    if (!l) {
      ++counters_.unknown_rnti;
      return;
    }
    touch(*l, e.stamp.rx_time);
    records_[l->index].pending_grants.push_back(
        {shifted(idx, dci->subframe_offset), tn + kSubframe * dci->subframe_offset, dci->rb_alloc});
    notify(*l, e);
    return;
  }
  if (const auto* dci = std::get_if<DciFormat1>(&msg)) {
    Live* l = live(dci->rnti);
    if (!l) {
      ++counters_.unknown_rnti;
      return;
    }
    touch(*l, e.stamp.rx_time);
    dl_assignments_.push_back({idx, tn, dci->rnti, dci->rb_alloc});
    notify(*l, e);
    return;
  }

  // Shared-channel payload: find its assignment in this subframe.
  const auto a = std::find_if(dl_assignments_.begin(), dl_assignments_.end(),
                              [&](const DlAssignment& d) {
                                return d.index == idx && d.alloc == e.alloc &&
                                       std::abs((tn - d.t).ticks()) < kSubframe.ticks() / 2;
                              });
  Live* l = a == dl_assignments_.end() ? nullptr : live(a->rnti);
  if (!l) {
    ++counters_.unattributed_downlink;
    return;
  }
  touch(*l, e.stamp.rx_time);
  if (const auto* ta = std::get_if<MacTaCommand>(&msg)) {
    const Instant effective = tn + kSubframe * kTaDelaySubframes;
    if (config_.ack_gating) {
      // A resend reuses the HARQ process and replaces the pending command.
      const std::uint8_t harq = harq_of(idx);
      std::erase_if(l->pending_ta, [&](const PendingTa& p) { return p.harq_id == harq; });
      l->pending_ta.push_back({harq, ta->adjust, effective});
    } else {
      schedule_ta(*l, ta->adjust, effective);
    }
  }
  notify(*l, e);
}

std::vector<Measurement> Probe::on_uplink(const Event& e) {
  const Message& msg = *e.msg;
  if (std::holds_alternative<RandomAccessPreamble>(msg)) return {};
  if (!decodable(misalignment_, config_.decode_threshold)) {
    ++counters_.undecodable;
    return {};
  }
  const SubframeIndex idx = e.stamp.index();
  const Instant tn = t_n_of(idx);

  if (const auto* ack = std::get_if<Ack>(&msg)) {
    const SubframeIndex dl_idx = shifted(idx, -kHarqFeedbackDelay);
    const auto a = std::find_if(dl_assignments_.begin(), dl_assignments_.end(),
                                [&](const DlAssignment& d) {
                                  return d.index == dl_idx && d.alloc == e.alloc;
                                });
    Live* l = a == dl_assignments_.end() ? nullptr : live(a->rnti);
    if (!l) {
      ++counters_.unmatched_ack;
      return {};
    }
    touch(*l, e.stamp.rx_time + ul_correction_);
    const auto p = std::find_if(l->pending_ta.begin(), l->pending_ta.end(),
                                [&](const PendingTa& t) { return t.harq_id == ack->harq_id; });
    if (p != l->pending_ta.end()) {
      schedule_ta(*l, p->adjust, p->effective);
      l->pending_ta.erase(p);
    }
    notify(*l, e);
    return {};
  }

  // Drop stale grants, then look for the one this transmission uses.
  Live* owner = nullptr;
  for (auto& [rnti, l] : live_) {
    auto& grants = records_[l.index].pending_grants;
    std::erase_if(grants, [&](const PendingGrant& g) {
      return tn - g.target_time > config_.grant_lifetime;
    });
    auto g = std::find_if(grants.begin(), grants.end(), [&](const PendingGrant& pg) {
      return pg.target == idx && pg.alloc == e.alloc &&
             std::abs((pg.target_time - tn).ticks()) < kSubframe.ticks() / 2;
    });
    if (!owner && g != grants.end()) {
      grants.erase(g);
      owner = &l;
    }
  }
  if (!owner) {
    ++counters_.uplink_without_grant;
    return {};
  }

  const Instant toa = e.stamp.rx_time + ul_correction_;
  touch(*owner, toa);
  auto& rec = records_[owner->index];
  if (const auto* req = std::get_if<RrcConnectionRequest>(&msg)) {
    if (req->has_tmsi) {
      rec.tmsi = req->tmsi_or_random;
    } else {
      rec.random_id = req->tmsi_or_random.value;
    }
  } else if (const auto* att = std::get_if<AttachRequest>(&msg)) {
    rec.attach_request = true;
    rec.capabilities = att->capabilities;
    if (const auto* t = std::get_if<Tmsi>(&att->id)) {
      if (!rec.tmsi) rec.tmsi = *t;
    } else {
      rec.imsi = std::get<Imsi>(att->id);
    }
  } else if (const auto* svc = std::get_if<ServiceRequest>(&msg)) {
    rec.service_request = true;
    if (!rec.tmsi) rec.tmsi = svc->tmsi;
  } else if (const auto* resp = std::get_if<IdentityResponse>(&msg)) {
    rec.imsi = resp->imsi;
  }

  apply_due(*owner, tn);
  Measurement m;
  m.probe = config_.id;
  m.rnti = rec.rnti;
  m.conn_start = rec.start;
  m.subframe = e.stamp;
  m.subframe.rx_time = toa;
  m.toa = toa;
  m.t_n = tn;
  m.ta = rec.ta_current;
  m.d_ta = ta_span(rec.ta_current);
  m.sum_delay = sum_delay(toa, tn, m.d_ta);
  m.tx_id = e.tx_id;
  rec.measurements.push_back(m);
  notify(*owner, e);
  return {m};
}

}  // namespace tatrack

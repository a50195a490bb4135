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

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace tatrack {
namespace {

constexpr Instant kT0 = Instant::at(Span::s(1));

// Hand-written capture of one cell. The probe sits `probe_m` from the eNB
// and the UE is `ue_m` from the eNB and `ue_probe_m` from the probe.
class Capture {
 public:
  Capture(double probe_m, double ue_m, double ue_probe_m)
      : d_dl_(Span::from_meters(probe_m)),
        d_ue_(Span::from_meters(ue_m)),
        d_ul_(Span::from_meters(ue_probe_m)) {}

  Instant tn(std::int64_t k) const { return kT0 + Span::ms(k); }
  Span d_ue() const { return d_ue_; }
  Span d_ul() const { return d_ul_; }

  Event dl(std::int64_t k, Message m, std::uint16_t alloc = 0) const {
    return make(k, Carrier::downlink, tn(k) + d_dl_, std::move(m), alloc);
  }
  // Uplink sent with advance `ta`.
  Event ul(std::int64_t k, Message m, TaIndex ta, std::uint16_t alloc) const {
    return make(k, Carrier::uplink, uplink_toa(tn(k), d_ue_, d_ul_, ta_span(ta)), std::move(m), alloc);
  }
  static Event sync(std::int64_t k, Carrier c, Instant t) {
    Event e;
    e.probe = "p";
    e.stamp = {static_cast<std::uint16_t>((k / 10) % 1024), static_cast<std::uint8_t>(k % 10), t, c};
    return e;
  }

 private:
  static Event make(std::int64_t k, Carrier c, Instant t, Message m, std::uint16_t alloc) {
    Event e = sync(k, c, t);
    e.msg = std::move(m);
    e.alloc = alloc;
    e.tx_id = static_cast<std::uint64_t>(k + 1);
    return e;
  }

  Span d_dl_;
  Span d_ue_;
  Span d_ul_;
};

ProbeConfig config_at(double probe_m) {
  ProbeConfig c;
  c.id = "p";
  c.position = {probe_m, 0};
  c.enb_position = {0, 0};
  return c;
}

constexpr Rnti kRnti{0x004A};

RandomAccessResponse rar(TaIndex ta, std::uint16_t alloc = 5) { return {kRnti, ta, {alloc, 3}}; }

TEST(Probe, ScriptedConnectionYieldsOneMeasurement) {
  const Capture cap(0, 500, 500);
  Probe probe(config_at(0));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);

  EXPECT_TRUE(probe.ingest(cap.dl(3, rar(ta))).empty());
  const auto ms = probe.ingest(cap.ul(9, RrcConnectionRequest{Tmsi{0xDEADBEEF}, true, 3}, ta, 5));
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].rnti, kRnti);
  EXPECT_EQ(ms[0].t_n, cap.tn(9));
  EXPECT_EQ(ms[0].ta, ta);
  EXPECT_EQ(ms[0].sum_delay, cap.d_ue() + cap.d_ul());
  EXPECT_EQ(ms[0].tx_id, 10u);

  const auto* rec = probe.find(kRnti);
  ASSERT_NE(rec, nullptr);
  ASSERT_TRUE(rec->tmsi.has_value());
  EXPECT_EQ(rec->tmsi->value, 0xDEADBEEFu);
  EXPECT_EQ(rec->measurements.size(), 1u);
  EXPECT_EQ(probe.counters().uplink_without_grant, 0u);
}

TEST(Probe, ConnectionRequestWithoutTmsiKeepsRandomValue) {
  const Capture cap(0, 100, 100);
  Probe probe(config_at(0));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  probe.ingest(cap.ul(9, RrcConnectionRequest{Tmsi{0x1234}, false, 0}, ta, 5));
  const auto* rec = probe.find(kRnti);
  ASSERT_NE(rec, nullptr);
  EXPECT_FALSE(rec->tmsi.has_value());
  EXPECT_EQ(rec->random_id, 0x1234u);
}

TEST(Probe, UplinkWithoutGrantIsCountedAndDropped) {
  const Capture cap(0, 200, 200);
  Probe probe(config_at(0));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta, 5));
  EXPECT_TRUE(probe.ingest(cap.ul(15, UplinkData{100}, ta, 5)).empty());
  EXPECT_EQ(probe.counters().uplink_without_grant, 1u);
  EXPECT_EQ(probe.find(kRnti)->measurements.size(), 1u);
}

TEST(Probe, GrantMustMatchAllocation) {
  const Capture cap(0, 200, 200);
  Probe probe(config_at(0));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta, 5));
  probe.ingest(cap.dl(20, DciFormat0{kRnti, 4, 9, 0}));
  EXPECT_TRUE(probe.ingest(cap.ul(24, UplinkData{1}, ta, 8)).empty());
  EXPECT_EQ(probe.counters().uplink_without_grant, 1u);
}

TEST(Probe, StaleGrantExpires) {
  const Capture cap(0, 200, 200);
  ProbeConfig cfg = config_at(0);
  Probe probe(cfg);
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta, 5));
  probe.ingest(cap.dl(20, DciFormat0{kRnti, 4, 9, 0}));
  // Target 24 + lifetime 8 ends at 32; a stray transmission at 30 carries
  // another index, so the grant is unused and then pruned.
  probe.ingest(cap.ul(30, UplinkData{1}, ta, 9));
  EXPECT_EQ(probe.counters().uplink_without_grant, 1u);
  EXPECT_EQ(probe.find(kRnti)->pending_grants.size(), 1u);
  probe.ingest(cap.ul(40, UplinkData{1}, ta, 9));
  EXPECT_TRUE(probe.find(kRnti)->pending_grants.empty());
}

// TA command at 20, resent at 28 on the same HARQ process, acked at 32.
struct TaScript {
  Capture cap{0, 800, 800};
  TaIndex ta0 = quantize_ta(Span::from_meters(800) * 2);

  std::size_t run(Probe& probe, bool ack) const {
    probe.ingest(cap.dl(3, rar(ta0)));
    probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta0, 5));
    for (std::int64_t k : {20, 28}) {
      probe.ingest(cap.dl(k, DciFormat1{kRnti, 7, 1}));
      probe.ingest(cap.dl(k, MacTaCommand{4}, 7));
    }
    if (ack) probe.ingest(cap.ul(32, Ack{4}, ta0, 7));
    probe.ingest(cap.dl(36, DciFormat0{kRnti, 4, 11, 0}));
    return probe.ingest(cap.ul(40, UplinkData{10}, TaIndex(ta0.value() + 4), 11)).size();
  }
};

TEST(Probe, ResentTaCommandAppliedOnceWithAckGating) {
  const TaScript s;
  Probe probe(config_at(0));
  EXPECT_EQ(s.run(probe, true), 1u);
  const auto* rec = probe.find(kRnti);
  EXPECT_EQ(rec->ta_current.value(), s.ta0.value() + 4);
  EXPECT_EQ(rec->ta_history.size(), 2u);
  EXPECT_EQ(rec->ta_history.back().effective, s.cap.tn(34));
  EXPECT_EQ(rec->measurements.back().sum_delay, s.cap.d_ue() + s.cap.d_ul());
}

TEST(Probe, UnackedTaCommandIsNotApplied) {
  const TaScript s;
  Probe probe(config_at(0));
  s.run(probe, false);
  EXPECT_EQ(probe.find(kRnti)->ta_current, s.ta0);
}

TEST(Probe, WithoutGatingEveryCopyIsApplied) {
  const TaScript s;
  ProbeConfig cfg = config_at(0);
  cfg.ack_gating = false;
  Probe probe(cfg);
  s.run(probe, true);
  EXPECT_EQ(probe.find(kRnti)->ta_current.value(), s.ta0.value() + 8);
}

TEST(Probe, AckWithoutAssignmentIsUnmatched) {
  const Capture cap(0, 100, 100);
  Probe probe(config_at(0));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  probe.ingest(cap.ul(14, Ack{2}, ta, 7));
  EXPECT_EQ(probe.counters().unmatched_ack, 1u);
}

TEST(Probe, TaUpdateIsClampedAtZero) {
  const Capture cap(0, 10, 10);
  Probe probe(config_at(0));
  probe.ingest(cap.dl(3, rar(TaIndex(0))));
  probe.ingest(cap.ul(9, RrcConnectionRequest{}, TaIndex(0), 5));
  probe.ingest(cap.dl(20, DciFormat1{kRnti, 7, 1}));
  probe.ingest(cap.dl(20, MacTaCommand{-31}, 7));
  probe.ingest(cap.ul(24, Ack{4}, TaIndex(0), 7));
  probe.ingest(cap.dl(30, DciFormat0{kRnti, 4, 3, 0}));
  probe.ingest(cap.ul(34, UplinkData{1}, TaIndex(0), 3));
  EXPECT_EQ(probe.find(kRnti)->ta_current.value(), 0);
  EXPECT_EQ(probe.counters().ta_clamped, 1u);
}

TEST(Probe, SharedChannelWithoutAssignmentIsUnattributed) {
  const Capture cap(0, 100, 100);
  Probe probe(config_at(0));
  probe.ingest(cap.dl(3, rar(TaIndex(1))));
  probe.ingest(cap.dl(12, RrcConnectionSetup{1}, 4));
  EXPECT_EQ(probe.counters().unattributed_downlink, 1u);
}

TEST(Probe, ObserverSeesAttributedMessages) {
  const Capture cap(0, 100, 100);
  Probe probe(config_at(0));
  std::vector<std::string> seen;
  probe.set_observer([&](const ConnectionRecord& rec, const Event& e) {
    EXPECT_EQ(rec.rnti, kRnti);
    seen.emplace_back(message_name(*e.msg));
  });
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta, 5));
  probe.ingest(cap.dl(12, DciFormat1{kRnti, 4, 0}));
  probe.ingest(cap.dl(12, RrcConnectionSetup{1}, 4));
  ASSERT_EQ(seen.size(), 4u);
  EXPECT_EQ(seen[3], message_name(Message{RrcConnectionSetup{}}));
}

TEST(Probe, NewRandomAccessOnLiveRntiHaltsOldRecord) {
  const Capture cap(0, 100, 100);
  Probe probe(config_at(0));
  probe.ingest(cap.dl(3, rar(TaIndex(1))));
  probe.ingest(cap.dl(50, rar(TaIndex(2))));
  ASSERT_EQ(probe.records().size(), 2u);
  EXPECT_EQ(probe.records()[0].state, ConnState::halted);
  EXPECT_EQ(probe.records()[1].state, ConnState::active);
  EXPECT_EQ(probe.find(kRnti)->ta_initial.value(), 2);
}

TEST(Probe, InactivityHaltsThenCloses) {
  const Capture cap(0, 100, 100);
  Probe probe(config_at(0));
  probe.ingest(cap.dl(3, rar(TaIndex(1))));
  probe.advance_to(cap.tn(3) + Span::ms(1500));
  EXPECT_EQ(probe.find(kRnti)->state, ConnState::halted);
  probe.advance_to(cap.tn(3) + Span::s(11));
  EXPECT_EQ(probe.find(kRnti), nullptr);
  EXPECT_EQ(probe.records()[0].state, ConnState::closed);
}

TEST(Probe, RemoteProbeInfersSubframeStart) {
  // Probe 300 m from the eNB; UE 400 m from the eNB and 500 m from the probe.
  const Capture cap(300, 400, 500);
  Probe probe(config_at(300));
  EXPECT_EQ(probe.d_dlprobe(), Span::from_meters(300));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  const auto ms = probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta, 5));
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].t_n, cap.tn(9));
  EXPECT_EQ(ms[0].sum_delay, cap.d_ue() + cap.d_ul());
}

TEST(Probe, SumDelayIsExactForRandomGeometry) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 5000);
  for (int i = 0; i < 500; ++i) {
    const double probe_m = u(rng) / 5;
    const Capture cap(probe_m, u(rng), u(rng));
    Probe probe(config_at(probe_m));
    const TaIndex ta = quantize_ta(cap.d_ue() * 2);
    probe.ingest(cap.dl(3, rar(ta)));
    const auto ms = probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta, 5));
    ASSERT_EQ(ms.size(), 1u);
    ASSERT_EQ(ms[0].sum_delay, cap.d_ue() + cap.d_ul());
  }
}

TEST(Carriers, AlignmentShiftsUplinkBack) {
  std::vector<SubframeStamp> dl;
  std::vector<SubframeStamp> ul;
  for (int k = 0; k < 20; ++k) {
    const Instant t = kT0 + Span::ms(k);
    dl.push_back(Capture::sync(k, Carrier::downlink, t).stamp);
    ul.push_back(Capture::sync(k, Carrier::uplink, t + Span::us(3)).stamp);
  }
  const Span corr = align_carriers(dl, ul);
  EXPECT_EQ(corr, -Span::us(3));
  EXPECT_EQ(residual_misalignment(dl, ul, corr), Span{});
  EXPECT_EQ(residual_misalignment(dl, ul, Span{}), Span::us(3));
}

TEST(Carriers, NoSharedIndexThrows) {
  const std::vector<SubframeStamp> dl{Capture::sync(1, Carrier::downlink, kT0).stamp};
  const std::vector<SubframeStamp> ul{Capture::sync(2, Carrier::uplink, kT0).stamp};
  EXPECT_THROW(align_carriers(dl, ul), InvalidArgument);
}

TEST(Carriers, DecodeThreshold) {
  EXPECT_FALSE(decodable(Span::us(4)));
  EXPECT_TRUE(decodable(Span::ns(3999)));
  EXPECT_TRUE(decodable(-Span::us(2)));
  EXPECT_FALSE(decodable(-Span::us(5)));
}

void feed_sync(Probe& probe, Span ul_offset) {
  for (int k = 0; k < 3; ++k) {
    const Instant t = kT0 + Span::ms(k);
    probe.ingest(Capture::sync(k, Carrier::downlink, t));
    probe.ingest(Capture::sync(k, Carrier::uplink, t + ul_offset));
  }
}

TEST(Carriers, MisalignedUplinkIsUndecodableWithoutCorrection) {
  const Capture cap(0, 100, 100);
  ProbeConfig cfg = config_at(0);
  cfg.align_carriers = false;
  Probe probe(cfg);
  feed_sync(probe, Span::us(5));
  EXPECT_EQ(probe.misalignment(), Span::us(5));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  EXPECT_TRUE(probe.ingest(cap.ul(9, RrcConnectionRequest{}, ta, 5)).empty());
  EXPECT_EQ(probe.counters().undecodable, 1u);
}

TEST(Carriers, CorrectionRestoresSumDelay) {
  const Capture cap(0, 100, 100);
  Probe probe(config_at(0));
  feed_sync(probe, Span::us(5));
  EXPECT_EQ(probe.ul_correction(), -Span::us(5));
  const TaIndex ta = quantize_ta(cap.d_ue() * 2);
  probe.ingest(cap.dl(3, rar(ta)));
  Event e = cap.ul(9, RrcConnectionRequest{}, ta, 5);
  e.stamp.rx_time += Span::us(5);  // uplink radio clock runs ahead
  const auto ms = probe.ingest(e);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].sum_delay, cap.d_ue() + cap.d_ul());
}

TEST(Carriers, InferSubframeStart) {
  const Instant rx = kT0 + Span::us(2);
  EXPECT_EQ(infer_t_n(rx, Span::us(2)), kT0);
  EXPECT_EQ(infer_t_n(rx, Span{}), rx);
}

TEST(Events, JsonlRoundTrip) {
  const Capture cap(0, 100, 100);
  std::vector<Event> events{
      Capture::sync(0, Carrier::downlink, kT0),
      cap.dl(3, rar(TaIndex(4))),
      cap.ul(9, RrcConnectionRequest{Tmsi{7}, true, 2}, TaIndex(4), 5),
  };
  events[1].direction = Direction::tx;
  std::stringstream ss;
  write_jsonl(ss, events);
  EXPECT_EQ(read_jsonl(ss), events);
}

TEST(Events, MalformedLineNamesLine) {
  std::stringstream ss;
  write_jsonl(ss, {Capture::sync(0, Carrier::downlink, kT0)});
  ss << "{\"t_ps\": 5, \"probe\": \n";
  try {
    read_jsonl(ss);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace tatrack

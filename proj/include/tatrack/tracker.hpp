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

// Tracking database: TMSI to IMSI pairs, linked connections and the
// position fixes that make up each subscriber's trace.
//
// Every mutation is an operation appended to a JSONL journal; replaying the
// journal rebuilds an identical database.

#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tatrack/extractor.hpp"
#include "tatrack/fingerprint.hpp"
#include "tatrack/geometry.hpp"
#include "tatrack/probe.hpp"

namespace tatrack {

struct ConnectionStats {
  double median_distance_m = 0.0;
  /// Values kept after outlier removal.
  std::size_t n_measurements = 0;
  std::size_t n_outliers_removed = 0;
  double iqr_m = 0.0;
};

/// Median of one connection's distances after dropping values more than
/// 10 x IQR from the median. Empty below 10 values, before or after removal.
std::optional<ConnectionStats> connection_stats(std::span<const double> meters);

inline constexpr std::size_t kMinMeasurements = 10;

enum class ExtractionOutcome : std::uint8_t {
  imsi_obtained,
  imsi_in_clear,
  no_response,
  overshadow_failed,
  not_engaged,
};
std::string_view to_string(ExtractionOutcome o);
ExtractionOutcome extraction_outcome_from_string(std::string_view s);

/// One line of the extraction log.
struct ExtractionRecord {
  Instant t;
  std::string probe;
  Rnti rnti;
  std::optional<Tmsi> tmsi;
  std::optional<Imsi> imsi;
  std::optional<Trigger> trigger;
  ExtractionOutcome outcome = ExtractionOutcome::no_response;
  friend bool operator==(const ExtractionRecord&, const ExtractionRecord&) = default;
};
nlohmann::json to_json(const ExtractionRecord& r);
ExtractionRecord extraction_from_json(const nlohmann::json& j);

struct ConnectionKey {
  std::string probe;
  Rnti rnti;
  Instant start;
  friend auto operator<=>(const ConnectionKey&, const ConnectionKey&) = default;
};
ConnectionKey key_of(const ConnectionRecord& rec);
std::string to_string(const ConnectionKey& k);

struct PairRecord {
  Tmsi tmsi;
  Imsi imsi;
  Instant first_seen;
  Instant last_seen;
  /// Set once the TMSI stops denoting this IMSI.
  std::optional<Instant> valid_until;
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

enum class LinkKind : std::uint8_t { known, new_pair, imsi_direct, provisional, handover };
std::string_view to_string(LinkKind k);

/// IMSI digits, or an anonymous id starting with "anon-".
struct LinkResult {
  std::string identity;
  LinkKind kind = LinkKind::provisional;
  bool provisional() const { return kind == LinkKind::provisional; }
};

struct ConnectionEntry {
  ConnectionKey key;
  std::string cell;
  std::string identity;
  LinkKind kind = LinkKind::provisional;
  Instant last_seen;
  bool operator==(const ConnectionEntry&) const = default;
};

struct Fix {
  ConnectionKey key;
  Instant t;
  std::vector<Locus> loci;
  PositionEstimate estimate;
};

struct TracePoint {
  Instant t;
  ConnectionKey key;
  Position position;
  double residual_rms_m = 0.0;
  /// Re-solved with the hardware-error correction.
  bool corrected = false;
};

/// Removes a hardware error from measured loci: range sums shrink by 2 h,
/// ring radii by h.
std::vector<Locus> correct_loci(std::span<const Locus> loci, double hw_error_m);

/// Anonymous id derived from a connection key, formatted like a UUID.
std::string provisional_id(const ConnectionKey& key);

class TrackDb {
 public:
  /// Pair valid at `t`.
  std::optional<Imsi> lookup(Tmsi tmsi, Instant t) const;
  /// True when the TMSI has an open pair.
  bool knows(Tmsi tmsi) const;
  /// Stores or refreshes a pair. An open pair of the same IMSI under another
  /// TMSI is closed at `t`. Throws IntegrityError when the TMSI is paired with
  /// a different IMSI.
  void add_pair(Tmsi tmsi, const Imsi& imsi, Instant t);
  const std::vector<PairRecord>& pairs() const { return pairs_; }

  void record_connection(const ConnectionEntry& entry);
  const ConnectionEntry* connection(const ConnectionKey& key) const;
  const std::map<ConnectionKey, ConnectionEntry>& connections() const { return connections_; }

  void add_fix(Fix fix);
  /// Fixes of one connection, in time order.
  std::vector<const Fix*> fixes(const ConnectionKey& key) const;

  /// Remembers the phone model of an identity; the hardware error, when the
  /// table has one, then applies to all of its fixes.
  void set_model(const std::string& identity, const std::string& model, std::optional<double> hw_error_m);
  std::optional<std::string> model_of(const std::string& identity) const;
  std::optional<double> hw_error_of(const std::string& identity) const;

  /// Every identity that owns at least one connection, sorted.
  std::vector<std::string> identities() const;

  /// Time-ordered fixes of every connection linked to `identity`. Throws
  /// InvalidArgument for an unknown identity.
  std::vector<TracePoint> build_trace(const std::string& identity) const;

  const std::vector<nlohmann::json>& journal() const { return journal_; }
  void write_journal(std::ostream& out) const;
  /// Throws InputError on a malformed journal.
  static TrackDb replay(std::istream& in);

 private:
  void apply(const nlohmann::json& op);

  std::vector<PairRecord> pairs_;
  std::map<ConnectionKey, ConnectionEntry> connections_;
  std::vector<Fix> fixes_;
  struct ModelInfo {
    std::string model;
    std::optional<double> hw_error_m;
  };
  std::map<std::string, ModelInfo> models_;
  std::vector<nlohmann::json> journal_;
};

/// Resolves the identity behind a connection and records it in the db.
/// Known TMSI: its IMSI. Fresh TMSI with an extraction of this connection:
/// a new pair. IMSI seen directly: that IMSI. Otherwise a provisional id
/// that is never merged. Throws InvalidArgument when the connection carries
/// neither a TMSI nor a random value, and IntegrityError for conflicting
/// extraction records.
LinkResult link_connection(TrackDb& db, const ConnectionRecord& conn,
                           std::span<const ExtractionRecord> extraction_log, const std::string& cell = "");

struct HandoverCandidate {
  ConnectionKey key;
  std::string cell;
  Instant halted_at;
  std::optional<Position> last_position;
};

struct HandoverParams {
  Span max_gap = Span::s(10);
  double max_dist_m = 300.0;
};

/// Cells a UE may hand over between.
using NeighborFn = std::function<bool(const std::string& from, const std::string& to)>;

/// For a connection that began with random access but no Service Request:
/// the halted connection at a neighboring cell, within `max_gap`, whose last
/// fix is nearest to `first_position` and within `max_dist_m`.
std::optional<HandoverCandidate> match_handover(const ConnectionRecord& new_conn, const std::string& new_cell,
                                                Position first_position,
                                                std::span<const HandoverCandidate> halted,
                                                const NeighborFn& neighbors, const HandoverParams& params = {});

}  // namespace tatrack

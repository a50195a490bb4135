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

// Analysis stages run over a captured event log: probe replay, IMSI
// extraction replay, localization, tracking and accuracy statistics. The
// CLI strings them together; each stage also works on its own.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tatrack/probe.hpp"
#include "tatrack/scenario.hpp"
#include "tatrack/sim.hpp"
#include "tatrack/tracker.hpp"

namespace tatrack {

// --- probe -----------------------------------------------------------------

ProbeConfig probe_config(const Scenario& s, const ProbeSpec& p);

/// Captures one probe analyses. A ul probe also takes the downlink of its
/// reference.
std::vector<Event> events_for(const Scenario& s, const ProbeSpec& p, const std::vector<Event>& log);

/// Runs every probe of the scenario over the log, then lets all inactivity
/// timers expire. Probes appear in scenario order.
std::vector<Probe> replay_probes(const Scenario& s, const std::vector<Event>& log);

/// Every measurement, probe by probe, in capture order.
std::vector<Measurement> all_measurements(const std::vector<Probe>& probes);

void write_measurements_csv(std::ostream& out, const std::vector<Measurement>& ms);
/// Throws InputError.
std::vector<Measurement> read_measurements_csv(std::istream& in);

void write_records_csv(std::ostream& out, const std::vector<Probe>& probes);

// --- extraction ------------------------------------------------------------

/// Re-runs the extraction state machine on each attacker's captures. One
/// record per connection that reached an Attach or Service Request.
std::vector<ExtractionRecord> replay_extraction(const Scenario& s, const std::vector<Event>& log);

void write_extraction_jsonl(std::ostream& out, const std::vector<ExtractionRecord>& rs);
/// Throws InputError naming the line.
std::vector<ExtractionRecord> read_extraction_jsonl(std::istream& in);

// --- localization ----------------------------------------------------------

struct Localized {
  std::string cell;
  /// Connection as seen by the cell's primary probe.
  ConnectionKey key;
  Instant t;
  std::vector<Locus> loci;
  PositionEstimate estimate;
};

/// Primary probe of each cell: the first probe in scenario order that
/// measures uplink.
std::vector<std::string> primary_probes(const Scenario& s);

/// One fix per uplink subframe seen by the measuring probes of a cell:
/// the TA ring plus one ellipse per probe. Subframes whose loci all share
/// one focus give a distance only and are skipped. Among mirror candidates
/// the one nearest the previous fix of the connection wins.
std::vector<Localized> localize(const Scenario& s, const std::vector<Measurement>& ms);

void write_positions_csv(std::ostream& out, const std::vector<Localized>& fixes);

// --- tracking --------------------------------------------------------------

struct TrackResult {
  TrackDb db;
  std::vector<std::pair<ConnectionKey, LinkResult>> links;
};

/// Links every connection of the primary probes to an identity, hands over
/// connections that began without a request, classifies phone models and
/// stores the fixes.
TrackResult track(const Scenario& s, const std::vector<Probe>& probes,
                  const std::vector<ExtractionRecord>& extraction, const std::vector<Localized>& fixes);

void write_trace_csv(std::ostream& out, const TrackDb& db);

// --- statistics ------------------------------------------------------------

enum class GroupBy : std::uint8_t { model, imsi, connection };
GroupBy group_by_from_string(std::string_view s);
std::string_view to_string(GroupBy g);

struct ConnectionError {
  std::string group;
  std::string ue;
  std::string model;
  std::string imsi;
  ConnectionKey key;
  /// True one-way distance (d_ue + d_ul) / 2, averaged over the connection.
  double actual_m = 0.0;
  ConnectionStats stats;
  /// Hardware error estimated from all connections of the model.
  double hw_est_m = 0.0;
  std::optional<double> hw_table_m;
  /// |median - actual - hw_est|.
  double error_m = 0.0;
};

/// Per-connection distance errors of the co-located distance estimate
/// c * sum / 2, joined to the ground truth by tx_id. Connections with fewer
/// than 10 measurements are dropped.
std::vector<ConnectionError> connection_errors(const std::vector<Measurement>& ms,
                                               const std::vector<GroundTruth>& truth, GroupBy group_by);

struct GroupSummary {
  std::string group;
  std::size_t connections = 0;
  double median_error_m = 0.0;
  /// Nearest-rank 90th percentile.
  double p90_error_m = 0.0;
  double hw_est_m = 0.0;
  std::size_t outliers_removed = 0;
};
std::vector<GroupSummary> summarize(const std::vector<ConnectionError>& errors);

void write_stats_csv(std::ostream& out, const std::vector<ConnectionError>& errors);
void write_summary_csv(std::ostream& out, const std::vector<GroupSummary>& rows);

struct CdfPoint {
  std::string group;
  double error_m = 0.0;
  double fraction = 0.0;
};
/// Empirical CDF of the error_m column of a stats CSV, optionally per
/// value of another column. Throws InputError.
std::vector<CdfPoint> error_cdf(std::istream& stats_csv, const std::optional<std::string>& group_column);

// --- noise calibration -----------------------------------------------------

struct CalibrationPoint {
  double toa_sigma_m = 0.0;
  /// Averages over seeds and groups of the per-group summary values.
  double mean_p90_m = 0.0;
  double mean_median_m = 0.0;
};

struct CalibrationTarget {
  double p90_m = 0.0;
  double median_m = 0.0;
  /// Tolerated deviations; each term of the cost is normalized by one.
  double p90_tol_m = 2.0;
  double median_tol_m = 1.0;
};

struct CalibrationResult {
  std::vector<CalibrationPoint> points;
  /// Point with the smallest cost
  /// ((p90 - target) / p90_tol)^2 + ((median - target) / median_tol)^2.
  CalibrationPoint best;
};

/// Runs the replication scenario for every sigma and seed and picks the
/// sigma whose mean per-model 90th-percentile and median errors best match
/// the target. Throws InvalidArgument for an empty grid.
CalibrationResult calibrate_toa_sigma(ReplicationOptions base, const std::vector<double>& sigmas_m,
                                      const std::vector<std::uint64_t>& seeds, const CalibrationTarget& target);

// --- end to end ------------------------------------------------------------

enum class Stage : std::uint8_t { simulate, probe, extract, localize, track, stats };
std::string_view to_string(Stage s);
/// Throws InvalidArgument for an unknown name.
Stage stage_from_string(std::string_view s);
const std::vector<Stage>& all_stages();

struct RunOptions {
  std::string scenario_path;
  std::filesystem::path out_dir;
  std::set<Stage> stages;
  std::optional<std::uint64_t> seed;
  GroupBy group_by = GroupBy::model;
  int repeat = 1;
};

/// Runs the selected stages; a stage that is not selected takes its input
/// from the artifacts already in out_dir. Throws InputError when an input
/// is missing or malformed.
void run_pipeline(const RunOptions& opts, std::ostream& log);

}  // namespace tatrack

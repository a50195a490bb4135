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

#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tatrack/csv.hpp"
#include "tatrack/errors.hpp"
#include "tatrack/pipeline.hpp"
#include "tatrack/scenario.hpp"
#include "tatrack/sim.hpp"

namespace tatrack::cli {
namespace {

std::set<Stage> parse_stages(const std::string& list) {
  std::set<Stage> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      out.insert(all_stages().begin(), all_stages().end());
      continue;
    }
    try {
      out.insert(stage_from_string(item));
    } catch (const InvalidArgument& e) {
      throw InputError(std::string("--stages: ") + e.what());
    }
  }
  if (out.empty()) throw InputError("--stages: no stage given");
  return out;
}

void print_summary(const std::filesystem::path& path, std::ostream& out) {
  std::ifstream in(path);
  if (!in) return;
  const auto t = csv::Table::parse(in);
  const std::size_t g = t.column("group");
  const std::size_t n = t.column("connections");
  const std::size_t med = t.column("median_error_m");
  const std::size_t p90 = t.column("p90_error_m");
  const std::size_t hw = t.column("hw_est_m");
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %6s %10s %10s %10s\n", "group", "conns", "median_m", "p90_m", "hw_est_m");
  out << line;
  for (const auto& r : t.rows()) {
    std::snprintf(line, sizeof line, "%-24s %6s %10.3f %10.3f %10.3f\n", r[g].c_str(), r[n].c_str(),
                  std::stod(r[med]), std::stod(r[p90]), std::stod(r[hw]));
    out << line;
  }
}

int run_command(const RunOptions& opts, std::ostream& out) {
  run_pipeline(opts, out);
  if (opts.stages.contains(Stage::stats)) print_summary(opts.out_dir / "summary.csv", out);
  return kExitOk;
}

int cdf_command(const std::string& input, const std::optional<std::string>& group,
                const std::optional<std::string>& out_path, std::ostream& out) {
  std::ifstream in(input);
  if (!in) throw InputError("cannot read " + input);
  const auto points = error_cdf(in, group);
  std::ofstream file;
  if (out_path) {
    file.open(*out_path);
    if (!file) throw Error("cannot write " + *out_path);
  }
  std::ostream& dst = out_path ? file : out;
  if (group) {
    csv::write_row(dst, {*group, "error_m", "cumulative_fraction"});
  } else {
    csv::write_row(dst, {"error_m", "cumulative_fraction"});
  }
  char a[32];
  char b[32];
  for (const auto& p : points) {
    std::snprintf(a, sizeof a, "%.6f", p.error_m);
    std::snprintf(b, sizeof b, "%.6f", p.fraction);
    if (group) {
      csv::write_row(dst, {p.group, a, b});
    } else {
      csv::write_row(dst, {a, b});
    }
  }
  return kExitOk;
}

int replication_command(const ReplicationOptions& o, const std::optional<std::string>& out_path,
                        std::ostream& out) {
  const std::string text = to_json(replication_scenario(o)).dump(2) + "\n";
  if (!out_path) {
    out << text;
    return kExitOk;
  }
  std::ofstream f(*out_path);
  if (!f) throw Error("cannot write " + *out_path);
  f << text;
  return kExitOk;
}

int calibrate_command(const std::vector<double>& sigmas, int seeds, const CalibrationTarget& target,
                      std::ostream& out) {
  std::vector<std::uint64_t> seed_list;
  for (int i = 1; i <= seeds; ++i) seed_list.push_back(static_cast<std::uint64_t>(i));
  const auto r = calibrate_toa_sigma({}, sigmas, seed_list, target);
  csv::write_row(out, {"toa_sigma_m", "mean_p90_m", "mean_median_m"});
  char a[32], b[32], c[32];
  for (const auto& p : r.points) {
    std::snprintf(a, sizeof a, "%.3f", p.toa_sigma_m);
    std::snprintf(b, sizeof b, "%.3f", p.mean_p90_m);
    std::snprintf(c, sizeof c, "%.3f", p.mean_median_m);
    csv::write_row(out, {a, b, c});
  }
  out << "# best toa_sigma_m " << r.best.toa_sigma_m << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Passive LTE UE localization and tracking toolkit", "tatrack"};
  app.require_subcommand(1);

  RunOptions run;
  std::string stages = "all";
  std::string group_by = "model";
  std::string out_dir;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario and run the analysis stages");
  run_cmd->add_option("--scenario", run.scenario_path, "Scenario JSON file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--stages", stages, "Comma-separated subset of simulate,probe,extract,localize,track,stats");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Overrides the scenario seed");
  run_cmd->add_option("--group-by", group_by, "Statistics grouping")
      ->check(CLI::IsMember({"model", "imsi", "connection"}));
  run_cmd->add_option("--repeat", run.repeat, "Independent runs with seeds seed, seed+1, ...")
      ->check(CLI::PositiveNumber);

  std::string cdf_input;
  std::optional<std::string> cdf_group;
  std::optional<std::string> cdf_out;
  auto* cdf_cmd = app.add_subcommand("cdf", "Empirical CDF of per-connection errors");
  cdf_cmd->add_option("--input", cdf_input, "stats.csv written by the stats stage")->required();
  cdf_cmd->add_option("--group-by", cdf_group, "Column to group by, e.g. model");
  cdf_cmd->add_option("--out", cdf_out, "Output CSV (default: stdout)");

  ReplicationOptions rep;
  std::optional<std::string> rep_out;
  auto* rep_cmd = app.add_subcommand("replication", "Write the co-located distance replication scenario");
  rep_cmd->add_option("--toa-sigma-m", rep.toa_sigma_m, "One-way ToA jitter in meters");
  rep_cmd->add_option("--seed", rep.seed, "Scenario seed");
  rep_cmd->add_option("--out", rep_out, "Output JSON (default: stdout)");

  std::vector<double> cal_sigmas;
  int cal_seeds = 20;
  CalibrationTarget cal_target{5.696, 2.0};
  auto* cal_cmd = app.add_subcommand("calibrate", "Sweep the ToA jitter of the replication scenario");
  cal_cmd->add_option("--sigma-m", cal_sigmas, "Candidate one-way jitters in meters")
      ->required()
      ->delimiter(',');
  cal_cmd->add_option("--seeds", cal_seeds, "Seeds 1..N per candidate")->check(CLI::PositiveNumber);
  cal_cmd->add_option("--target-p90", cal_target.p90_m, "Target mean 90th-percentile error in meters");
  cal_cmd->add_option("--target-median", cal_target.median_m, "Target mean median error in meters");

  std::string validate_path;
  auto* val_cmd = app.add_subcommand("validate", "Check a scenario file");
  val_cmd->add_option("--scenario", validate_path, "Scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*run_cmd) {
      run.out_dir = out_dir;
      run.stages = parse_stages(stages);
      run.group_by = group_by_from_string(group_by);
      if (*seed_opt) run.seed = seed;
      return run_command(run, out);
    }
    if (*cdf_cmd) return cdf_command(cdf_input, cdf_group, cdf_out, out);
    if (*cal_cmd) return calibrate_command(cal_sigmas, cal_seeds, cal_target, out);
    if (*rep_cmd) return replication_command(rep, rep_out, out);
    if (*val_cmd) {
      const Scenario s = load_scenario(validate_path);
      out << validate_path << ": ok (" << s.enbs.size() << " eNodeBs, " << s.probes.size() << " probes, "
          << s.ues.size() << " UEs)\n";
      return kExitOk;
    }
  } catch (const InputError& e) {
    err << "tatrack: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "tatrack: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace tatrack::cli

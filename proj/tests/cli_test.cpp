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

#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "support/files.hpp"
#include "support/scenarios.hpp"
#include "tatrack/csv.hpp"

namespace tatrack {
namespace {

using testing::ScratchDir;
using testing::read_file;
using testing::snapshot;
using testing::write_file;
namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tatrack");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

Scenario small_replication() {
  ReplicationOptions o;
  o.models = {"Huawei P30", "iPhone 8"};
  o.distances_m = {0.0, 30.0};
  o.connections_per_distance = 3;
  o.toa_sigma_m = 18.0;
  return replication_scenario(o);
}

std::string write_scenario(const ScratchDir& dir, const Scenario& s, const std::string& name = "scenario.json") {
  const auto p = dir.path() / name;
  write_file(p, to_json(s).dump(2));
  return p.string();
}

TEST(Cli, RunWritesArtifactsAndSummary) {
  ScratchDir dir("run");
  const auto scen = write_scenario(dir, small_replication());
  const auto out = dir.path() / "out";
  const Outcome r = run_cli({"run", "--scenario", scen, "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"events.jsonl", "ground_truth.csv", "measurements.csv", "extraction.jsonl", "trace.csv",
                        "stats.csv", "summary.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_NE(r.out.find("p90_m"), std::string::npos);
  EXPECT_NE(r.out.find("Huawei P30"), std::string::npos);
  EXPECT_NE(r.out.find("iPhone 8"), std::string::npos);
}

TEST(Cli, SimulateOnlyWritesEventLog) {
  ScratchDir dir("sim");
  const auto scen = write_scenario(dir, small_replication());
  const auto out = dir.path() / "out";
  const Outcome r = run_cli({"run", "--scenario", scen, "--out", out.string(), "--stages", "simulate"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "events.jsonl"));
  EXPECT_FALSE(fs::exists(out / "measurements.csv"));
  EXPECT_FALSE(fs::exists(out / "stats.csv"));
}

TEST(Cli, StagesResumeFromArtifacts) {
  ScratchDir dir("resume");
  const auto scen = write_scenario(dir, small_replication());
  const auto out = dir.path() / "out";
  ASSERT_EQ(run_cli({"run", "--scenario", scen, "--out", out.string(), "--stages", "simulate,probe"}).code, 0);
  const Outcome r = run_cli({"run", "--scenario", scen, "--out", out.string(), "--stages", "stats"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "stats.csv"));
}

TEST(Cli, MissingStageInputIsInputError) {
  ScratchDir dir("missing");
  const auto scen = write_scenario(dir, small_replication());
  const Outcome r = run_cli({"run", "--scenario", scen, "--out", (dir.path() / "o").string(), "--stages", "stats"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("simulate"), std::string::npos) << r.err;
}

TEST(Cli, CorruptScenarioExitsTwoWithPosition) {
  ScratchDir dir("corrupt");
  const auto p = dir.path() / "bad.json";
  write_file(p, "{\n  \"enbs\": [\n    {\"id\": \"e\",,}\n  ]\n}\n");
  const Outcome r = run_cli({"run", "--scenario", p.string(), "--out", (dir.path() / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.json:3:"), std::string::npos) << r.err;
}

TEST(Cli, SchemaViolationExitsTwo) {
  ScratchDir dir("schema");
  auto j = to_json(small_replication());
  j["probes"][0]["cell"] = "nowhere";
  const auto p = dir.path() / "s.json";
  write_file(p, j.dump());
  const Outcome r = run_cli({"run", "--scenario", p.string(), "--out", (dir.path() / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nowhere"), std::string::npos) << r.err;
}

TEST(Cli, BadFlagsExitTwo) {
  EXPECT_EQ(run_cli({"run", "--scenario", "x.json"}).code, 2);
  EXPECT_EQ(run_cli({"run", "--scenario", "x", "--out", "y", "--group-by", "color"}).code, 2);
  EXPECT_EQ(run_cli({"run", "--scenario", "x", "--out", "y", "--stages", "dance"}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, RunIsByteIdentical) {
  ScratchDir dir("idem");
  const auto scen = write_scenario(dir, testing::handover_scenario());
  const auto a = dir.path() / "a";
  const auto b = dir.path() / "b";
  ASSERT_EQ(run_cli({"run", "--scenario", scen, "--out", a.string()}).code, 0);
  ASSERT_EQ(run_cli({"run", "--scenario", scen, "--out", b.string()}).code, 0);
  const auto sa = snapshot(a);
  EXPECT_GE(sa.size(), 10u);
  EXPECT_EQ(sa, snapshot(b));
}

TEST(Cli, SeedOverrideChangesOutput) {
  ScratchDir dir("seed");
  const auto scen = write_scenario(dir, small_replication());
  const auto a = dir.path() / "a";
  const auto b = dir.path() / "b";
  ASSERT_EQ(run_cli({"run", "--scenario", scen, "--out", a.string(), "--stages", "simulate"}).code, 0);
  ASSERT_EQ(run_cli({"run", "--scenario", scen, "--out", b.string(), "--stages", "simulate", "--seed", "99"}).code,
            0);
  EXPECT_NE(read_file(a / "events.jsonl"), read_file(b / "events.jsonl"));
}

TEST(Cli, RepeatFansOutSeeds) {
  ScratchDir dir("repeat");
  const auto scen = write_scenario(dir, small_replication());
  const auto out = dir.path() / "out";
  const Outcome r = run_cli({"run", "--scenario", scen, "--out", out.string(), "--repeat", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "run-1" / "stats.csv"));
  EXPECT_TRUE(fs::exists(out / "run-2" / "stats.csv"));
  EXPECT_NE(read_file(out / "run-1" / "events.jsonl"), read_file(out / "run-2" / "events.jsonl"));
  std::ifstream in(out / "stats.csv");
  EXPECT_EQ(csv::Table::parse(in).rows().size(), 24u);
}

TEST(Cli, GroupByImsi) {
  ScratchDir dir("imsi");
  const auto scen = write_scenario(dir, small_replication());
  const auto out = dir.path() / "out";
  ASSERT_EQ(run_cli({"run", "--scenario", scen, "--out", out.string(), "--group-by", "imsi"}).code, 0);
  std::ifstream in(out / "summary.csv");
  EXPECT_EQ(csv::Table::parse(in).rows().size(), 4u);
}

TEST(Cli, CdfOfSingleValue) {
  ScratchDir dir("cdf1");
  const auto p = dir.path() / "stats.csv";
  write_file(p, "error_m\n5.0\n");
  const Outcome r = run_cli({"cdf", "--input", p.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "error_m,cumulative_fraction\n5.000000,1.000000\n");
}

TEST(Cli, CdfOfEmptyInputFails) {
  ScratchDir dir("cdf0");
  const auto p = dir.path() / "stats.csv";
  write_file(p, "error_m\n");
  EXPECT_EQ(run_cli({"cdf", "--input", p.string()}).code, 2);
  write_file(p, "error_m\nnot-a-number\n");
  EXPECT_EQ(run_cli({"cdf", "--input", p.string()}).code, 2);
  EXPECT_EQ(run_cli({"cdf", "--input", (dir.path() / "none.csv").string()}).code, 2);
}

TEST(Cli, CdfQuantileMatchesSummary) {
  ScratchDir dir("cdf");
  const auto scen = write_scenario(dir, small_replication());
  const auto out = dir.path() / "out";
  ASSERT_EQ(run_cli({"run", "--scenario", scen, "--out", out.string()}).code, 0);
  const auto cdf_path = dir.path() / "cdf.csv";
  ASSERT_EQ(run_cli({"cdf", "--input", (out / "stats.csv").string(), "--group-by", "model", "--out",
                     cdf_path.string()})
                .code,
            0);
  std::ifstream cin(cdf_path);
  const auto cdf = csv::Table::parse(cin);
  std::ifstream sin(out / "summary.csv");
  const auto summary = csv::Table::parse(sin);
  ASSERT_EQ(summary.rows().size(), 2u);
  for (const auto& row : summary.rows()) {
    const std::string model = row[summary.column("group")];
    const double p90 = std::stod(row[summary.column("p90_error_m")]);
    // Nearest rank: the first value whose cumulative fraction reaches 0.9.
    std::optional<double> q;
    for (const auto& c : cdf.rows()) {
      if (c[0] != model) continue;
      if (std::stod(c[2]) >= 0.9 - 1e-9) {
        q = std::stod(c[1]);
        break;
      }
    }
    ASSERT_TRUE(q) << model;
    EXPECT_NEAR(*q, p90, 1e-5) << model;
  }
}

TEST(Cli, ReplicationScenarioValidates) {
  ScratchDir dir("rep");
  const auto p = dir.path() / "rep.json";
  ASSERT_EQ(run_cli({"replication", "--toa-sigma-m", "18", "--out", p.string()}).code, 0);
  const Outcome r = run_cli({"validate", "--scenario", p.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("30 UEs"), std::string::npos);
}

}  // namespace
}  // namespace tatrack

// Copyright 2026 The nhmpc Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "nhmpc/viability.hpp"

namespace fs = std::filesystem;

namespace {

struct Dir {
  fs::path path;
  explicit Dir(const std::string& name) : path(fs::temp_directory_path() / ("nhmpc_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Dir() { fs::remove_all(path); }
};

int Cli(const std::string& args) {
  const std::string cmd = std::string(NHMPC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> Csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.push_back("");
    rows.push_back(row);
  }
  return rows;
}

fs::path WriteConfig(const Dir& d, const std::string& text) {
  const fs::path p = d.path / "config.json";
  std::ofstream(p) << text;
  return p;
}

TEST(Cli, KernelKinksFollowTheLaw) {
  Dir d("kernel");
  ASSERT_EQ(Cli("kernel --out " + d.path.string()), 0);
  const auto rows = Csv(d.path / "surface.csv");
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(rows[0].front(), "family");
  std::map<std::string, bool> seen;
  int kinks = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    ASSERT_EQ(r.size(), 11u);
    if (seen[r[1]]) continue;
    seen[r[1]] = true;
    if (r[0] != "T1" && r[0] != "T3") continue;
    const double v = std::stod(r[6]);
    const nhmpc::State k = nhmpc::kink_locus(v, nhmpc::InputBox{});
    EXPECT_NEAR(std::stod(r[3]), k.x1, 1e-9) << "curve " << r[1];
    ++kinks;
  }
  EXPECT_EQ(kinks, 48);
  const auto man = nlohmann::json::parse(Slurp(d.path / "kernel_manifest.json"));
  EXPECT_EQ(man["curves"], 96);
  EXPECT_EQ(man["command"], "kernel");
}

TEST(Cli, KernelReflectionSymmetry) {
  Dir d("mirror");
  ASSERT_EQ(Cli("kernel --out " + d.path.string()), 0);
  // Reflection (x2, x3) -> (-x2, -x3) maps T1 onto T3 and T2 onto T4.
  std::map<std::string, std::vector<std::vector<double>>> fam;
  const auto rows = Csv(d.path / "surface.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<double> x;
    for (int j = 3; j <= 6; ++j) x.push_back(std::stod(rows[i][j]));
    fam[rows[i][0]].push_back(x);
  }
  for (auto [a, b] : {std::pair{"T1", "T3"}, std::pair{"T2", "T4"}}) {
    ASSERT_EQ(fam[a].size(), fam[b].size());
    for (std::size_t i = 0; i < fam[a].size(); ++i) {
      EXPECT_NEAR(fam[a][i][0], fam[b][i][0], 1e-9);
      EXPECT_NEAR(fam[a][i][1], -fam[b][i][1], 1e-9);
      EXPECT_NEAR(fam[a][i][2], -fam[b][i][2], 1e-9);
      EXPECT_NEAR(fam[a][i][3], fam[b][i][3], 1e-9);
    }
  }
}

TEST(Cli, ConfigErrors) {
  Dir d("config");
  const auto empty = WriteConfig(d, R"({"kernel": {"speed_lo": 3, "speed_hi": 2}})");
  EXPECT_EQ(Cli("kernel --config " + empty.string() + " --out " + d.path.string()), 2);
  const auto unknown = WriteConfig(d, R"({"horizn": 3})");
  EXPECT_EQ(Cli("mpc --config " + unknown.string() + " --out " + d.path.string()), 2);
  const auto nested = WriteConfig(d, R"({"solver": {"tolerance": 1}})");
  EXPECT_EQ(Cli("mpc --config " + nested.string() + " --out " + d.path.string()), 2);
  const auto seed = WriteConfig(d, R"({"seed": -1})");
  EXPECT_EQ(Cli("probe --config " + seed.string() + " --out " + d.path.string()), 2);
  EXPECT_EQ(Cli("horizon --preset table9 --out " + d.path.string()), 2);
  EXPECT_EQ(Cli("mpc --config " + (d.path / "missing.json").string()), 2);
  EXPECT_EQ(Cli("bogus"), 2);
}

TEST(Cli, MpcOriginAndInfeasible) {
  Dir d("mpc");
  const auto origin = WriteConfig(d, R"({"state": [0, 0, 0, 0]})");
  ASSERT_EQ(Cli("mpc --config " + origin.string() + " --out " + d.path.string()), 0);
  const auto rows = Csv(d.path / "trajectory.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].size(), 8u);
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(rows[1][5], "");

  const auto short_horizon = WriteConfig(d, R"({"horizon": 1, "sim_duration": 2})");
  EXPECT_EQ(Cli("mpc --config " + short_horizon.string() + " --out " + d.path.string()), 4);
  const auto man = nlohmann::json::parse(Slurp(d.path / "mpc_manifest.json"));
  EXPECT_FALSE(man["verdict"]["feasible"].get<bool>());
  EXPECT_TRUE(man["verdict"]["failure_step"].is_number());
}

TEST(Cli, HorizonExplicitAndBounded) {
  Dir d("horizon");
  const auto cfg = WriteConfig(d, R"({"states": [[0, 0, 0, 0]]})");
  ASSERT_EQ(Cli("horizon --config " + cfg.string() + " --out " + d.path.string()), 0);
  const auto rows = Csv(d.path / "horizon.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[4][0], "N_hat");
  EXPECT_EQ(rows[4][1], "1");

  const auto t4 = WriteConfig(d, R"({"states": [[0, 0.015625, 0, 0]], "n_max": 3})");
  EXPECT_EQ(Cli("horizon --preset table4 --config " + t4.string() + " --workers 2 --out " +
                d.path.string()),
            3);
  const auto rows4 = Csv(d.path / "table4.csv");
  ASSERT_EQ(rows4.size(), 6u);
  EXPECT_EQ(rows4[4][0], "N_hat");
  EXPECT_EQ(rows4[5][0], "N_tilde");
  EXPECT_EQ(rows4[5][1], ">3");
}

TEST(Cli, DeterministicOutput) {
  Dir a("det_a"), b("det_b");
  const auto cfg = WriteConfig(a, R"({"state": [0, 1, 0, 0], "dt": 1, "horizon": 6, "sim_duration": 60})");
  ASSERT_EQ(Cli("mpc --config " + cfg.string() + " --out " + a.path.string()), 0);
  ASSERT_EQ(Cli("mpc --config " + cfg.string() + " --out " + b.path.string()), 0);
  EXPECT_EQ(Slurp(a.path / "trajectory.csv"), Slurp(b.path / "trajectory.csv"));

  const auto probe = WriteConfig(a, R"({"probe": {"horizons": [0.5], "samples": 2}})");
  ASSERT_EQ(Cli("probe --seed 3 --config " + probe.string() + " --out " + a.path.string()), 0);
  ASSERT_EQ(Cli("probe --seed 3 --config " + probe.string() + " --out " + b.path.string()), 0);
  EXPECT_EQ(Slurp(a.path / "probe.csv"), Slurp(b.path / "probe.csv"));
  EXPECT_EQ(Csv(a.path / "probe.csv").size(), 6u);
}

}  // namespace

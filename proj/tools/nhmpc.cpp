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

// nhmpc: kernel | mpc | horizon | probe

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "nhmpc/horizon_lab.hpp"
#include "nhmpc/report.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nhmpc::tools::ConfigError;
using nhmpc::tools::RunConfig;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kInfeasible = 4 };

struct Flags {
  std::string config;
  std::string preset;
  std::string out;
  int workers = 0;
  long long seed = -1;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

json command_defaults(const std::string& cmd) {
  if (cmd == "mpc") return {{"state", {-3.55, 0.0, 0.0, 9.67}}, {"horizon", 34}};
  return json::object();
}

RunConfig load(const std::string& cmd, const Flags& f) {
  json user = json::object();
  if (!f.preset.empty()) user = nhmpc::tools::preset(f.preset);
  if (!f.config.empty()) user = nhmpc::tools::merge(user, read_json_file(f.config));
  if (!f.out.empty()) user["out"] = f.out;
  if (f.workers > 0) user["workers"] = f.workers;
  if (f.seed >= 0) user["seed"] = f.seed;
  json doc = command_defaults(cmd);
  if (user.contains("state") || user.contains("states")) {
    doc.erase("state");
    doc.erase("states");
  }
  return nhmpc::tools::parse_config(nhmpc::tools::merge(doc, user));
}

std::ofstream open_out(const RunConfig& rc, const std::string& name) {
  fs::create_directories(rc.out);
  std::ofstream os(fs::path(rc.out) / name);
  if (!os) throw std::runtime_error("cannot write " + name);
  return os;
}

void write_json(const RunConfig& rc, const std::string& name, const json& j) {
  open_out(rc, name) << j.dump(2) << '\n';
}

int cmd_kernel(const RunConfig& rc) {
  const auto& k = rc.kernel;
  const auto surface = nhmpc::build_kernel_surface(rc.mpc.box, k.speed_lo, k.speed_hi,
                                                   k.resolution, rc.mpc.wall);
  {
    auto os = open_out(rc, "surface.csv");
    nhmpc::write_surface_csv(os, surface);
  }
  {
    auto os = open_out(rc, "sheet.csv");
    nhmpc::write_sheet_csv(os, surface);
  }
  auto man = nhmpc::manifest(rc.document, "kernel");
  man["files"] = {"surface.csv", "sheet.csv"};
  man["curves"] = surface.curves().size();
  man["coverage"] = surface.coverage();
  man["barrier_duration"] = nhmpc::barrier_duration(rc.mpc.box);
  write_json(rc, "kernel_manifest.json", man);
  std::cout << "kernel: " << surface.curves().size() << " curves -> " << rc.out << '\n';
  return kOk;
}

int cmd_mpc(const RunConfig& rc) {
  if (rc.states.size() != 1) throw ConfigError("mpc needs exactly one initial state");
  nhmpc::MpcConfig cfg = rc.mpc;
  const auto run = nhmpc::run_mpc(rc.states.front(), cfg);
  {
    auto os = open_out(rc, "trajectory.csv");
    nhmpc::write_trajectory_csv(os, run);
  }
  auto man = nhmpc::manifest(rc.document, "mpc");
  man["files"] = {"trajectory.csv"};
  man["verdict"] = nhmpc::run_verdict(run, cfg);
  write_json(rc, "mpc_manifest.json", man);
  std::cout << "mpc: N=" << cfg.horizon << " converged=" << run.converged
            << " feasible=" << run.feasible << " steps=" << run.inputs.size() << '\n';
  return run.converged && run.feasible ? kOk : kInfeasible;
}

int cmd_horizon(const RunConfig& rc) {
  nhmpc::ExperimentSpec spec;
  if (rc.table_id) spec = nhmpc::table_spec(*rc.table_id);
  if (!rc.states.empty()) {
    if (!rc.table_id || rc.states != spec.states) spec.reference.clear();
    spec.states = rc.states;
  }
  if (spec.states.empty()) throw ConfigError("horizon needs 'table_id' or 'states'");
  if (spec.costs != rc.costs) spec.reference.clear();
  spec.costs = rc.costs;
  spec.mpc = rc.mpc;
  spec.n_min = rc.n_min;
  spec.n_max = rc.n_max;
  const auto rep = nhmpc::run_table(spec, rc.workers);
  const std::string base = rc.table_id ? "table" + std::to_string(*rc.table_id) : "horizon";
  {
    auto os = open_out(rc, base + ".csv");
    nhmpc::write_table_csv(os, rep);
  }
  auto side = nhmpc::table_sidecar(rep, rc.document);
  side["files"] = {base + ".csv"};
  write_json(rc, base + ".json", side);
  {
    nhmpc::write_table_csv(std::cout, rep);
  }
  return rep.complete() ? kOk : kNumeric;
}

int cmd_probe(const RunConfig& rc) {
  const auto& p = rc.probe;
  std::vector<nhmpc::State> region = p.states;
  if (region.empty()) {
    for (double s : {0.5, 0.25, 0.125}) region.push_back({0.0, s, 0.0, 0.0});
    std::mt19937_64 rng(rc.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < p.samples; ++i) {
      const nhmpc::State x{p.radius * u(rng), p.radius * p.radius * u(rng),
                           p.radius * u(rng), p.radius * u(rng)};
      if (nhmpc::min_stage_cost(x, rc.mpc.cost) > 0.0) region.push_back(x);
    }
  }
  const auto rep = nhmpc::cost_controllability_probe(region, p.horizons, rc.mpc.cost, p.dt,
                                                     rc.mpc.box, rc.mpc.wall, rc.workers,
                                                     rc.mpc.solver);
  {
    auto os = open_out(rc, "probe.csv");
    os << "x1,x2,x3,x4,T,V_T,l_star,ratio,feasible\n";
    for (const auto& e : rep.entries) {
      os << nhmpc::fmt(e.x0.x1) << ',' << nhmpc::fmt(e.x0.x2) << ',' << nhmpc::fmt(e.x0.x3)
         << ',' << nhmpc::fmt(e.x0.x4) << ',' << nhmpc::fmt(e.horizon) << ','
         << nhmpc::fmt(e.value) << ',' << nhmpc::fmt(e.min_cost) << ',' << nhmpc::fmt(e.ratio)
         << ',' << (e.feasible ? 1 : 0) << '\n';
    }
  }
  auto man = nhmpc::manifest(rc.document, "probe");
  man["files"] = {"probe.csv"};
  man["horizons"] = rep.horizons;
  man["max_ratio"] = rep.max_ratio;
  write_json(rc, "probe_manifest.json", man);
  for (std::size_t j = 0; j < rep.horizons.size(); ++j) {
    std::cout << "T=" << rep.horizons[j] << " max ratio " << rep.max_ratio[j] << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viability-aware MPC experiments for a nonholonomic vehicle"};
  app.require_subcommand(1);
  Flags flags;
  auto add_flags = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON config file");
    sub->add_option("--preset", flags.preset, "bundled preset: table1..table4");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--workers", flags.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", flags.seed, "random seed")->check(CLI::NonNegativeNumber);
  };
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"kernel", "export the barrier surface"},
      {"mpc", "run one closed loop"},
      {"horizon", "search minimal stabilizing horizons"},
      {"probe", "tabulate V_T / l* ratios"}};
  for (const auto& [name, help] : cmds) add_flags(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const RunConfig rc = load(cmd, flags);
    if (cmd == "kernel") return cmd_kernel(rc);
    if (cmd == "mpc") return cmd_mpc(rc);
    if (cmd == "horizon") return cmd_horizon(rc);
    return cmd_probe(rc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  }
}

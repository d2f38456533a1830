/*
 * Copyright 2025 The Opus Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// opus: scenario generation, window analysis, simulation and econ reports.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "opus/econ.hpp"
#include "opus/error.hpp"
#include "opus/fabric.hpp"
#include "opus/report.hpp"
#include "opus/scenario.hpp"
#include "opus/windows.hpp"
#include "opus/workload.hpp"

namespace {

using namespace opus;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
};

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
      return 4;
    case ErrorCode::DegreeInfeasible:
    case ErrorCode::RadixExceeded:
    case ErrorCode::ConflictDeadlock:
    case ErrorCode::UnsupportedKind:
      return 3;
    default:
      return 2;
  }
}

void report_error(std::string_view code, std::string msg) {
  for (auto& c : msg) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  fmt::print(stderr, "error: code={} msg={}\n", code, msg);
}

Scenario load(const Common& c) {
  if (c.config.empty()) throw Error(ErrorCode::InvalidConfig, "a scenario file is required (--config)");
  Scenario s = load_scenario(c.config, c.overrides);
  apply_seed_env(s);
  return s;
}

std::string out_path(const Common& c, const std::string& name) {
  std::filesystem::create_directories(c.out_dir);
  return (std::filesystem::path(c.out_dir) / name).string();
}

Topology electrical_of(const TopologySpec& spec) {
  TopologySpec e = spec;
  e.rail_switch = RailSwitch{};
  return Topology(e);
}

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("-c,--config", c.config, "Scenario file (JSON, comments allowed)");
  if (needs_config) opt->required();
  cmd->add_option("--set", c.overrides, "Override a scenario field, e.g. topology.num_domains=8");
  cmd->add_option("-o,--out", c.out_dir, "Output directory")->capture_default_str();
}

int cmd_gen(const Common& c, const std::string& out_name) {
  Scenario s = load(c);
  if (!s.workload) throw Error(ErrorCode::InvalidConfig, "gen needs a workload section");
  const Topology topo = electrical_of(s.topology);
  const EventDag dag = generate_3d_schedule(*s.workload, topo);
  ControlPolicy policy = s.control;
  policy.iterations = 1;
  const SimResult res = simulate(dag, topo, policy);
  const std::string path = out_path(c, out_name);
  write_file(path, write_trace(with_observed(dag, res)));
  fmt::print("wrote {} ({} events, {} groups)\n", path, dag.size(), dag.groups().size());
  return 0;
}

int cmd_windows(const Common& c, const std::string& trace, const std::vector<double>& edges_mb) {
  Scenario s = load(c);
  if (!trace.empty()) {
    s.workload.reset();
    s.trace_path = trace;
  }
  const Topology topo = electrical_of(s.topology);
  std::vector<std::uint64_t> edges = default_class_edges();
  if (!edges_mb.empty()) {
    edges.clear();
    for (double mb : edges_mb) edges.push_back(static_cast<std::uint64_t>(mb * 1e6));
  }

  EventDag dag = scenario_dag(s, topo);
  std::optional<SimResult> sim;
  if (!s.trace_path) {
    ControlPolicy policy = s.control;
    sim = simulate(dag, topo, policy);
  }
  std::vector<Window> windows;
  for (RailId rail = 0; rail < topo.num_rails(); ++rail) {
    const auto timeline = sim ? rail_timeline(dag, topo, *sim, rail) : observed_rail_timeline(dag, topo, rail);
    if (timeline.empty()) continue;
    auto ws = rail_windows(timeline, rail);
    windows.insert(windows.end(), ws.windows.begin(), ws.windows.end());
  }
  label_windows(windows, edges);
  write_file(out_path(c, "windows.csv"), windows_csv(windows));
  if (windows.empty()) {
    write_file(out_path(c, "cdf.csv"), cdf_csv({}));
    fmt::print("no windows\n");
    return 0;
  }
  write_file(out_path(c, "cdf.csv"), cdf_csv(window_cdf(windows)));
  std::size_t over = 0;
  for (const auto& w : windows) over += w.size > 1e-3 ? 1 : 0;
  fmt::print("windows: {}\n", windows.size());
  fmt::print("fraction over 1 ms: {:.4f}\n", static_cast<double>(over) / static_cast<double>(windows.size()));
  for (const auto& st : classify_by_volume(windows, edges)) {
    fmt::print("class {:>8}: count {:4}  mean {:.6f} s  min {:.6f} s  max {:.6f} s\n", st.label, st.count,
               st.mean, st.min, st.max);
  }
  return 0;
}

int cmd_sim(const Common& c, std::optional<double> delay, std::optional<bool> provisioning) {
  Scenario s = load(c);
  if (delay) {
    s.topology.rail_switch.kind = SwitchKind::Ocs;
    s.topology.rail_switch.reconfig_delay = *delay;
  }
  if (provisioning) s.control.provisioning = *provisioning;
  const Topology topo(s.topology);
  const EventDag dag = scenario_dag(s, topo);
  const SimResult res = simulate(dag, topo, s.control);
  write_file(out_path(c, "timeline.csv"), timeline_csv(dag, res));
  write_file(out_path(c, "reconfig.csv"), reconfig_csv(res.reconfig_log));
  fmt::print("makespan_s: {:.9f}\nbaseline_s: {:.9f}\noverhead: {:.6f}\nreconfigurations: {}\n", res.makespan,
             res.baseline_makespan, res.overhead, res.reconfig_log.size());
  return 0;
}

int cmd_sweep(const Common& c, unsigned jobs) {
  Scenario s = load(c);
  const Topology topo(s.topology);
  const EventDag dag = scenario_dag(s, topo);
  std::vector<double> delays = s.delays;
  if (delays.empty()) delays = {0.0, 0.001, 0.005, 0.010, 0.025, 0.050, 0.100};
  ControlPolicy reactive = s.control;
  reactive.provisioning = false;
  ControlPolicy provisioned = s.control;
  provisioned.provisioning = true;
  const auto rows = sweep_delay(dag, topo, delays, {reactive, provisioned}, jobs);
  write_file(out_path(c, "sweep.csv"), sweep_csv(rows));
  write_file(out_path(c, "sweep.svg"), sweep_svg(rows));
  fmt::print("{:>10} {:>13} {:>12} {:>9}\n", "delay_s", "policy", "makespan_s", "overhead");
  for (const auto& r : rows) {
    fmt::print("{:>10.4f} {:>13} {:>12.6f} {:>9.4f}\n", r.delay, r.policy, r.makespan, r.overhead);
  }
  return 0;
}

int cmd_table4(const Common& c) {
  const auto rows = scalability_table(default_scaleup_systems(), default_ocs_technologies());
  write_file(out_path(c, "table4.csv"), table4_csv(rows));
  for (const auto& r : rows) {
    fmt::print("{:<16} {:>10g} ms  radix {:>5}  {:<6} {:>6} GPUs\n", r.tech.name, r.tech.reconfig_ms, r.tech.radix,
               r.system.name, r.max_gpus);
  }
  return 0;
}

int cmd_econ(const Common& c) {
  Scenario s = load(c);
  const Topology topo(s.topology);
  const Bom elec = electrical_fabric_bom(topo, s.econ);
  const Bom ocs = ocs_fabric_bom(topo, s.econ);
  write_file(out_path(c, "bom.csv"), bom_csv({elec, ocs}));
  cmd_table4(c);
  const Savings sv = compare(elec, ocs);
  fmt::print("config: {}\n", c.config);
  fmt::print("electrical: cost {:.0f} power {:.0f} W ({} tier(s))\n", elec.total_cost, elec.total_power, elec.tiers);
  fmt::print("ocs:        cost {:.0f} power {:.0f} W\n", ocs.total_cost, ocs.total_power);
  fmt::print("cost saving: {:.2f}%\npower saving: {:.2f}%\n", sv.cost * 100.0, sv.power * 100.0);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photonic rail fabric simulator and analysis toolkit"};
  app.require_subcommand(1);

  Common common;
  std::string gen_out = "trace.csv";
  auto* gen = app.add_subcommand("gen", "Generate a 3D-parallel trace with baseline timestamps");
  add_common(gen, common);
  gen->add_option("--name", gen_out, "Trace file name inside the output directory")->capture_default_str();

  std::string trace;
  std::vector<double> edges_mb;
  auto* win = app.add_subcommand("windows", "Extract inter-phase windows, their CDF and volume classes");
  add_common(win, common);
  win->add_option("--trace", trace, "Trace file with observed timestamps (overrides the scenario)");
  win->add_option("--edges-mb", edges_mb, "Volume class edges in MB, increasing")->delimiter(',');

  std::optional<double> delay;
  bool provisioning_on = false, provisioning_off = false;
  auto* sim = app.add_subcommand("sim", "Simulate one scenario");
  add_common(sim, common);
  sim->add_option("--delay", delay, "Run on OCS rails with this reconfiguration delay (s)");
  sim->add_flag("--provisioning", provisioning_on, "Enable speculative provisioning");
  sim->add_flag("--no-provisioning", provisioning_off, "Disable speculative provisioning");

  unsigned jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Sweep reconfiguration delay for both policies");
  add_common(sweep, common);
  sweep->add_option("-j,--jobs", jobs, "Sweep points simulated in parallel")->capture_default_str();

  auto* econ = app.add_subcommand("econ", "Bill of materials and savings, plus the scalability table");
  add_common(econ, common);
  auto* table4 = app.add_subcommand("table4", "Scalability table of OCS technologies");
  add_common(table4, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("Usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(common, gen_out);
    if (win->parsed()) return cmd_windows(common, trace, edges_mb);
    if (sim->parsed()) {
      std::optional<bool> prov;
      if (provisioning_on) prov = true;
      if (provisioning_off) prov = false;
      return cmd_sim(common, delay, prov);
    }
    if (sweep->parsed()) return cmd_sweep(common, jobs);
    if (econ->parsed()) return cmd_econ(common);
    if (table4->parsed()) return cmd_table4(common);
  } catch (const Error& e) {
    report_error(to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    report_error("IoError", e.what());
    return 4;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return 1;
  }
  return 0;
}

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

#include "opus/econ.hpp"

#include <fmt/format.h>

#include "opus/error.hpp"

namespace opus {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void finish(Bom& bom) {
  for (const auto& line : bom.lines) {
    bom.total_cost += line.cost();
    bom.total_power += line.power();
  }
}

}  // namespace

void EconConfig::validate() const {
  const double values[] = {switch_cost,      switch_power,  transceiver_cost,
                           transceiver_power, ocs_port_cost, ocs_chassis_power};
  for (double v : values) {
    if (!(v >= 0.0)) throw Error(ErrorCode::InvalidConfig, "econ unit values must be >= 0");
  }
  if (switch_radix < 2) throw Error(ErrorCode::InvalidConfig, "switch radix must be at least 2");
  if (electrical_ports_per_gpu == 0 || ocs_ports_per_transceiver == 0) {
    throw Error(ErrorCode::InvalidConfig, "port counts in the econ config must be positive");
  }
}

std::uint64_t Bom::count(const std::string& item) const {
  for (const auto& line : lines) {
    if (line.item == item) return line.count;
  }
  return 0;
}

Bom electrical_fabric_bom(std::uint32_t num_domains, std::uint32_t gpus_per_domain,
                          const EconConfig& econ) {
  econ.validate();
  Bom bom;
  bom.fabric = "electrical";
  if (num_domains == 0 || gpus_per_domain == 0) return bom;

  const std::uint64_t k = econ.switch_radix;
  const std::uint64_t endpoints = std::uint64_t{num_domains} * econ.electrical_ports_per_gpu;
  std::uint64_t switches = 1;
  std::uint64_t links = endpoints;
  bom.tiers = 1;
  if (endpoints > k) {
    // Leaves split their ports evenly between hosts and spines.
    const std::uint64_t down = k / 2;
    const std::uint64_t leaves = ceil_div(endpoints, down);
    const std::uint64_t uplinks = leaves * (k - down);
    const std::uint64_t spines = ceil_div(uplinks, k);
    switches = leaves + spines;
    links = endpoints + uplinks;
    bom.tiers = 2;
  }
  const std::uint64_t rails = gpus_per_domain;
  bom.lines.push_back(BomLine{"switch", switches * rails, econ.switch_cost, econ.switch_power});
  bom.lines.push_back(
      BomLine{"transceiver", 2 * links * rails, econ.transceiver_cost, econ.transceiver_power});
  finish(bom);
  return bom;
}

Bom electrical_fabric_bom(const Topology& topo, const EconConfig& econ) {
  return electrical_fabric_bom(topo.num_domains(), topo.gpus_per_domain(), econ);
}

Bom ocs_fabric_bom(const Topology& topo, const EconConfig& econ) {
  econ.validate();
  Bom bom;
  bom.fabric = "ocs";
  const std::uint64_t radix = econ.ocs_radix ? econ.ocs_radix : topo.rail_switch().radix;
  const std::uint64_t per_rail = topo.rail_port_demand();
  if (per_rail > radix) {
    throw Error(ErrorCode::RadixExceeded,
                fmt::format("{} NIC ports per rail exceed OCS radix {}", per_rail, radix));
  }
  const std::uint64_t rails = topo.num_rails();
  const std::uint64_t gpus = topo.num_ranks();
  const std::uint64_t chassis = per_rail == 0 ? 0 : ceil_div(per_rail, radix);
  bom.tiers = 1;
  bom.lines.push_back(BomLine{"ocs_port", per_rail * rails, econ.ocs_port_cost, 0.0});
  bom.lines.push_back(BomLine{"ocs_chassis", chassis * rails, 0.0, econ.ocs_chassis_power});
  bom.lines.push_back(BomLine{"transceiver",
                              gpus * ceil_div(topo.ports_per_rail(), econ.ocs_ports_per_transceiver),
                              econ.transceiver_cost, econ.transceiver_power});
  finish(bom);
  return bom;
}

Savings compare(const Bom& electrical, const Bom& ocs) {
  Savings s;
  if (electrical.total_cost > 0.0) s.cost = 1.0 - ocs.total_cost / electrical.total_cost;
  if (electrical.total_power > 0.0) s.power = 1.0 - ocs.total_power / electrical.total_power;
  return s;
}

std::vector<OcsTechnology> default_ocs_technologies() {
  return {
      {"PLZT", 0.00001, 16},      {"SiP", 0.007, 32},        {"RotorNet", 0.01, 128},
      {"3D MEMS", 15.0, 320},     {"Piezo", 25.0, 576},      {"Liquid crystal", 100.0, 512},
      {"Robotic", 120000.0, 1008},
  };
}

std::vector<ScaleupSystem> default_scaleup_systems() { return {{"GB200", 72}, {"H200", 8}}; }

std::vector<ScalabilityRow> scalability_table(const std::vector<ScaleupSystem>& systems,
                                              const std::vector<OcsTechnology>& techs) {
  std::vector<ScalabilityRow> rows;
  for (const auto& tech : techs) {
    for (const auto& sys : systems) {
      rows.push_back(ScalabilityRow{tech, sys, max_gpus(sys.gpus, tech.radix)});
    }
  }
  return rows;
}

}  // namespace opus

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

// Bill of materials, cost and power of electrical versus OCS rail fabrics,
// and the GPU count reachable by flat OCS rails.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opus/model.hpp"

namespace opus {

/// Unit costs (currency) and powers (watts).
struct EconConfig {
  double switch_cost = 0.0;
  double switch_power = 0.0;
  std::uint32_t switch_radix = 64;
  double transceiver_cost = 0.0;
  double transceiver_power = 0.0;
  double ocs_port_cost = 0.0;
  double ocs_chassis_power = 0.0;
  std::uint32_t ocs_radix = 0;                  // 0: take the topology's rail switch radix
  std::uint32_t electrical_ports_per_gpu = 1;   // NIC ports of the electrical baseline
  std::uint32_t ocs_ports_per_transceiver = 1;  // breakout factor on the OCS side

  /// Throws InvalidConfig on negative values or a radix below 2.
  void validate() const;
};

struct BomLine {
  std::string item;
  std::uint64_t count = 0;
  double unit_cost = 0.0;
  double unit_power = 0.0;

  double cost() const { return static_cast<double>(count) * unit_cost; }
  double power() const { return static_cast<double>(count) * unit_power; }
};

struct Bom {
  std::string fabric;
  std::uint32_t tiers = 0;  // switching tiers per rail
  std::vector<BomLine> lines;
  double total_cost = 0.0;
  double total_power = 0.0;

  std::uint64_t count(const std::string& item) const;
};

/// Per rail: one switch when the rail's links fit its radix, otherwise a
/// non-oversubscribed leaf-spine. Every link has a transceiver at each end.
Bom electrical_fabric_bom(const Topology& topo, const EconConfig& econ);
/// Same as above for D domains of G GPUs; D = 0 gives an empty bill.
Bom electrical_fabric_bom(std::uint32_t num_domains, std::uint32_t gpus_per_domain,
                          const EconConfig& econ);

/// One OCS port per NIC port, NIC-side transceivers only, chassis per rail.
/// Throws RadixExceeded when a rail does not fit the OCS radix.
Bom ocs_fabric_bom(const Topology& topo, const EconConfig& econ);

struct Savings {
  double cost = 0.0;   // fraction of the electrical total saved
  double power = 0.0;
};

Savings compare(const Bom& electrical, const Bom& ocs);

struct OcsTechnology {
  std::string name;
  double reconfig_ms = 0.0;
  std::uint32_t radix = 0;
};

struct ScaleupSystem {
  std::string name;
  std::uint32_t gpus = 0;
};

std::vector<OcsTechnology> default_ocs_technologies();
std::vector<ScaleupSystem> default_scaleup_systems();

struct ScalabilityRow {
  OcsTechnology tech;
  ScaleupSystem system;
  std::uint64_t max_gpus = 0;
};

/// Row-major over technologies, then systems.
std::vector<ScalabilityRow> scalability_table(const std::vector<ScaleupSystem>& systems,
                                              const std::vector<OcsTechnology>& techs);

}  // namespace opus

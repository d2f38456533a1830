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

// Physical and logical domain types of a rail-optimized GPU fabric.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace opus {

using RankId = std::uint32_t;
using RailId = std::uint32_t;
using GroupId = std::string;

/// A NIC exposes its fixed total bandwidth as 1, 2 or 4 logical ports.
struct NicPortConfig {
  std::uint32_t ports = 1;
  double per_port_bandwidth = 400e9;  // bits per second

  double total_bandwidth() const { return ports * per_port_bandwidth; }

  /// Splits a fixed NIC bandwidth into `ports` equal ports; throws
  /// InvalidNicConfig for counts outside {1, 2, 4}.
  static NicPortConfig split(double total_bps, std::uint32_t ports);
};

enum class SwitchKind { Electrical, Ocs };

struct RailSwitch {
  SwitchKind kind = SwitchKind::Electrical;
  double reconfig_delay = 0.0;  // seconds, OCS only
  std::uint32_t radix = 0;      // ports, OCS only

  bool is_ocs() const { return kind == SwitchKind::Ocs; }
};

struct TopologySpec {
  std::uint32_t num_domains = 2;
  std::uint32_t gpus_per_domain = 1;
  double scaleup_bandwidth = 450e9;  // bytes per second
  NicPortConfig nic;
  RailSwitch rail_switch;
};

struct Rank {
  RankId global_id = 0;
  std::uint32_t domain = 0;
  std::uint32_t local_rank = 0;  // equals the rail id

  RailId rail() const { return local_rank; }
  friend bool operator==(const Rank&, const Rank&) = default;
};

/// Validated, immutable rail topology. Every GPU with local rank r attaches
/// all of its NIC ports to rail r.
class Topology {
 public:
  explicit Topology(const TopologySpec& spec);

  std::uint32_t num_domains() const { return spec_.num_domains; }
  std::uint32_t gpus_per_domain() const { return spec_.gpus_per_domain; }
  std::uint32_t num_rails() const { return spec_.gpus_per_domain; }
  std::uint32_t num_ranks() const { return spec_.num_domains * spec_.gpus_per_domain; }
  double scaleup_bandwidth() const { return spec_.scaleup_bandwidth; }
  const NicPortConfig& nic() const { return spec_.nic; }
  const RailSwitch& rail_switch() const { return spec_.rail_switch; }
  const TopologySpec& spec() const { return spec_; }

  const Rank& rank(RankId id) const;
  const std::vector<Rank>& ranks() const { return ranks_; }

  /// NIC ports a single GPU attaches to its rail.
  std::uint32_t ports_per_rail() const { return spec_.nic.ports; }
  /// Total NIC ports attached to one rail switch.
  std::uint32_t rail_port_demand() const { return spec_.num_domains * ports_per_rail(); }
  std::vector<RankId> rail_members(RailId rail) const;

 private:
  TopologySpec spec_;
  std::vector<Rank> ranks_;
};

Topology build_topology(const TopologySpec& spec);

/// Largest GPU count a flat OCS rail fabric reaches: scale-up size times
/// radix over two (two NIC ports per GPU on bidirectional transceivers).
std::uint64_t max_gpus(std::uint64_t scaleup_size, std::uint64_t radix);

enum class Axis { TP, DP, FSDP, PP, CP, EP };

std::string to_string(Axis axis);
Axis parse_axis(const std::string& text);

/// True for axes whose traffic crosses the rails.
inline bool is_scale_out(Axis axis) { return axis != Axis::TP; }

struct CommGroup {
  GroupId id;
  Axis axis = Axis::DP;
  std::vector<RankId> members;  // ring order
  std::vector<RailId> rails_touched;

  std::size_t size() const { return members.size(); }
  bool contains(RankId rank) const;
};

/// Builds a group with rank-sorted member order and checks the placement
/// rules: TP stays inside one domain, scale-out axes stay on one rail.
CommGroup make_group(const Topology& topo, GroupId id, Axis axis, std::vector<RankId> members,
                     bool keep_order = false);

/// Previous and next member on the group's ring.
std::pair<RankId, RankId> ring_neighbors(const CommGroup& group, RankId rank);

}  // namespace opus

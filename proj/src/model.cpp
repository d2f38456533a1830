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

#include "opus/model.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "opus/error.hpp"

namespace opus {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidNicConfig: return "InvalidNicConfig";
    case ErrorCode::RadixExceeded: return "RadixExceeded";
    case ErrorCode::NotMember: return "NotMember";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CyclicDependency: return "CyclicDependency";
    case ErrorCode::EmptyPhase: return "EmptyPhase";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnsupportedKind: return "UnsupportedKind";
    case ErrorCode::DegreeInfeasible: return "DegreeInfeasible";
    case ErrorCode::ConflictDeadlock: return "ConflictDeadlock";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

void check_ports(std::uint32_t ports) {
  if (ports != 1 && ports != 2 && ports != 4) {
    throw Error(ErrorCode::InvalidNicConfig,
                fmt::format("NIC port count must be 1, 2 or 4 (got {})", ports));
  }
}

}  // namespace

NicPortConfig NicPortConfig::split(double total_bps, std::uint32_t ports) {
  check_ports(ports);
  return NicPortConfig{ports, total_bps / ports};
}

Topology::Topology(const TopologySpec& spec) : spec_(spec) {
  if (spec.num_domains < 2) {
    throw Error(ErrorCode::InvalidConfig,
                fmt::format("topology needs at least 2 scale-up domains (got {})", spec.num_domains));
  }
  if (spec.gpus_per_domain < 1) {
    throw Error(ErrorCode::InvalidConfig, "topology needs at least 1 GPU per domain");
  }
  check_ports(spec.nic.ports);
  if (!(spec.nic.per_port_bandwidth > 0.0) || !(spec.scaleup_bandwidth > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "bandwidths must be positive");
  }
  if (spec.rail_switch.is_ocs()) {
    if (spec.rail_switch.reconfig_delay < 0.0) {
      throw Error(ErrorCode::InvalidConfig, "reconfiguration delay must be >= 0");
    }
    if (rail_port_demand() > spec.rail_switch.radix) {
      throw Error(ErrorCode::RadixExceeded,
                  fmt::format("rail needs {} OCS ports ({} domains x {} ports) but radix is {}",
                              rail_port_demand(), spec.num_domains, spec.nic.ports,
                              spec.rail_switch.radix));
    }
  }
  ranks_.reserve(num_ranks());
  for (std::uint32_t d = 0; d < spec.num_domains; ++d) {
    for (std::uint32_t l = 0; l < spec.gpus_per_domain; ++l) {
      ranks_.push_back(Rank{d * spec.gpus_per_domain + l, d, l});
    }
  }
}

const Rank& Topology::rank(RankId id) const {
  if (id >= ranks_.size()) {
    throw Error(ErrorCode::InvalidParams, fmt::format("rank {} out of range", id));
  }
  return ranks_[id];
}

std::vector<RankId> Topology::rail_members(RailId rail) const {
  std::vector<RankId> out;
  for (std::uint32_t d = 0; d < num_domains(); ++d) out.push_back(d * gpus_per_domain() + rail);
  return out;
}

Topology build_topology(const TopologySpec& spec) { return Topology(spec); }

std::uint64_t max_gpus(std::uint64_t scaleup_size, std::uint64_t radix) {
  return scaleup_size * radix / 2;
}

std::string to_string(Axis axis) {
  switch (axis) {
    case Axis::TP: return "TP";
    case Axis::DP: return "DP";
    case Axis::FSDP: return "FSDP";
    case Axis::PP: return "PP";
    case Axis::CP: return "CP";
    case Axis::EP: return "EP";
  }
  return "?";
}

Axis parse_axis(const std::string& text) {
  for (Axis a : {Axis::TP, Axis::DP, Axis::FSDP, Axis::PP, Axis::CP, Axis::EP}) {
    if (to_string(a) == text) return a;
  }
  throw Error(ErrorCode::ParseError, fmt::format("unknown axis '{}'", text));
}

bool CommGroup::contains(RankId rank) const {
  return std::find(members.begin(), members.end(), rank) != members.end();
}

CommGroup make_group(const Topology& topo, GroupId id, Axis axis, std::vector<RankId> members,
                     bool keep_order) {
  if (members.empty()) {
    throw Error(ErrorCode::InvalidParams, fmt::format("group {} has no members", id));
  }
  if (!keep_order) std::sort(members.begin(), members.end());
  auto sorted = members;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::InvalidParams, fmt::format("group {} lists a rank twice", id));
  }
  CommGroup g{std::move(id), axis, std::move(members), {}};
  const Rank& first = topo.rank(g.members.front());
  for (RankId r : g.members) {
    const Rank& rk = topo.rank(r);
    if (axis == Axis::TP && rk.domain != first.domain) {
      throw Error(ErrorCode::InvalidParams,
                  fmt::format("TP group {} spans more than one scale-up domain", g.id));
    }
    if (is_scale_out(axis) && rk.local_rank != first.local_rank) {
      throw Error(ErrorCode::InvalidParams,
                  fmt::format("{} group {} spans more than one rail", to_string(axis), g.id));
    }
  }
  if (is_scale_out(axis)) g.rails_touched = {first.rail()};
  return g;
}

std::pair<RankId, RankId> ring_neighbors(const CommGroup& group, RankId rank) {
  auto it = std::find(group.members.begin(), group.members.end(), rank);
  if (it == group.members.end()) {
    throw Error(ErrorCode::NotMember, fmt::format("rank {} is not in group {}", rank, group.id));
  }
  if (group.members.size() < 2) {
    throw Error(ErrorCode::InvalidParams, fmt::format("group {} has no ring", group.id));
  }
  const std::size_t n = group.members.size();
  const std::size_t i = static_cast<std::size_t>(it - group.members.begin());
  return {group.members[(i + n - 1) % n], group.members[(i + 1) % n]};
}

}  // namespace opus

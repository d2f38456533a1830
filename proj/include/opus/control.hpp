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

// Control plane for OCS rails: a per-rank shim that intercepts collectives
// and issues reconfiguration requests, and a controller that batches them per
// communication group and programs circuits first-come-first-serve.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "opus/model.hpp"
#include "opus/windows.hpp"
#include "opus/workload.hpp"

namespace opus {

/// Physical NIC port: rank * ports_per_rank + local port index.
using PortId = std::uint32_t;

/// Rank-level ring pairings for a group; one entry per circuit.
struct CircuitConfig {
  GroupId group;
  std::vector<std::pair<RankId, RankId>> links;
  std::uint32_t ports_per_member = 0;

  friend bool operator==(const CircuitConfig&, const CircuitConfig&) = default;
};

/// Ports each member needs for the group's ring: two for rings of three or
/// more. A pair gets up to two parallel circuits, with the ports split among
/// the `sharing` pairs of the same phase that a member belongs to.
/// Throws DegreeInfeasible when the NIC cannot host the ring.
std::uint32_t ring_port_demand(const CommGroup& group, std::uint32_t nic_ports,
                               std::uint32_t sharing = 1);

CircuitConfig ring_config(const CommGroup& group, std::uint32_t nic_ports, std::uint32_t sharing = 1);

/// Largest number of pairs of the same axis class that any member of the
/// pair `group` belongs to; 1 for rings.
std::uint32_t pair_sharing(const CommGroup& group, const std::vector<CommGroup>& groups);

struct ReconfigRequest {
  GroupId group;
  RankId issuer = 0;
  double issue_time = 0.0;
  bool speculative = false;
};

enum class ShimAction { Serve, Request, Wait };

struct PhaseTransition {
  std::vector<GroupId> groups;
  EventId trigger = 0;
};

/// What the shim learns from the first iteration.
struct ProfiledSchedule {
  std::map<RailId, std::vector<PhaseTransition>> rails;
  /// Groups of each rank's scale-out collectives in join order.
  std::map<RankId, std::vector<GroupId>> rank_sequence;
};

/// Builds the schedule from per-rail timelines of one iteration.
ProfiledSchedule profile_iteration(const std::map<RailId, std::vector<CollectiveTiming>>& timelines);

/// After a rank completes the collective at `completed_index` of its
/// sequence, asks for the next phase's group when the group changes. The
/// sequence wraps around to the next iteration.
std::optional<ReconfigRequest> provision(std::span<const GroupId> rank_sequence,
                                         std::size_t completed_index,
                                         const GroupId& completed_group, RankId rank, double now);

struct Circuit {
  PortId port_a = 0;
  PortId port_b = 0;
  RankId rank_a = 0;
  RankId rank_b = 0;
  GroupId group;
  double setup_start = 0.0;
  double up_since = 0.0;  // circuit usable from here
};

struct CircuitInterval {
  RailId rail = 0;
  Circuit circuit;
  double down_at = 0.0;  // +inf while still up
};

struct ReconfigLogEntry {
  double time = 0.0;
  RailId rail = 0;
  GroupId group;
  bool speculative = false;
  double delay = 0.0;
  std::vector<PortId> ports;     // ports programmed with a new circuit
  std::vector<PortId> released;  // far ends of torn-down circuits, left unconnected
};

/// Controller state for every OCS rail of a topology: per-group cached
/// configs, outstanding requests, the FC-FS job queue and live circuits.
class GroupTable {
 public:
  GroupTable(const Topology& topo, const std::vector<CommGroup>& groups);

  const CommGroup& group(const GroupId& id) const;
  /// Cached ring configuration; computed on first use.
  const CircuitConfig& config(const GroupId& id);
  const std::map<GroupId, CircuitConfig>& cached_configs() const { return configs_; }

  /// Every circuit of the group's ring exists and has finished switching.
  bool installed(const GroupId& id, double now) const;
  bool has_request(const GroupId& id, RankId rank) const;
  bool has_open_job(const GroupId& id) const;

  /// Records a request; a group becomes a queued job once every member asked.
  void submit(const ReconfigRequest& request);
  /// Drops a rank's speculative interest in groups other than `actual`.
  void cancel_speculation(RankId rank, const GroupId& actual);

  /// Starts every queued job that is at the FC-FS head for all ports it
  /// programs and whose affected ports carry no traffic. Returns new log entries.
  std::vector<ReconfigLogEntry> apply(double now, double delay);

  /// Earliest time a started reconfiguration finishes, if any is in flight.
  std::optional<double> next_ready_time(double now) const;

  /// Marks ports of the group's ring busy for a transfer; returns them.
  std::vector<PortId> begin_transfer(const GroupId& id);
  void end_transfer(const GroupId& id, const std::vector<PortId>& ports, double now);

  bool idle() const;
  std::string describe_blocked() const;

  const std::vector<CircuitInterval>& circuit_log() const { return circuit_log_; }
  /// Closes open circuit intervals at `now` (end of simulation).
  std::vector<CircuitInterval> circuit_log_snapshot(double now) const;
  std::uint32_t ports_per_rank() const { return ports_per_rank_; }
  RailId rail_of(RankId rank) const { return topo_.rank(rank).rail(); }

 private:
  struct Job {
    std::uint64_t seq = 0;
    GroupId group;
    double created = 0.0;
    bool speculative = false;
    enum class State { Queued, Switching, AwaitingTraffic, Done } state = State::Queued;
    double ready_at = 0.0;
    std::set<PortId> touched_ports;
  };

  struct Plan {
    std::vector<std::size_t> evict;                        // indices into circuits_
    std::vector<std::pair<PortId, PortId>> new_ports;      // bound circuits
    std::vector<std::pair<RankId, RankId>> new_ranks;
    std::vector<PortId> touched_ports;   // programmed
    std::vector<PortId> released_ports;  // unconnected by evictions only
  };

  Plan plan(const GroupId& id) const;
  bool blocked_by_earlier(const Job& job, const std::vector<PortId>& touched) const;
  void remove_circuit(std::size_t idx, double now);

  const Topology& topo_;
  std::uint32_t ports_per_rank_;
  std::map<GroupId, CommGroup> groups_;
  std::map<GroupId, std::uint32_t> sharing_;
  std::map<GroupId, CircuitConfig> configs_;
  std::map<GroupId, std::map<RankId, ReconfigRequest>> requests_;
  std::vector<Job> jobs_;  // FC-FS order
  std::uint64_t next_seq_ = 0;
  std::vector<Circuit> circuits_;
  std::vector<std::size_t> circuit_log_index_;  // circuits_[i] -> circuit_log_ entry
  std::vector<CircuitInterval> circuit_log_;
  std::map<PortId, std::uint32_t> busy_;  // transfers in flight per port
};

/// The shim's decision for a rank joining a collective of `group`.
ShimAction shim_intercept(const GroupId& group, RankId rank, double now, const GroupTable& table);

}  // namespace opus

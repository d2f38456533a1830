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

// Discrete-event simulation of an event DAG over a rail topology.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "opus/control.hpp"
#include "opus/model.hpp"
#include "opus/windows.hpp"
#include "opus/workload.hpp"

namespace opus {

/// Ring-algorithm duration of a collective under the alpha-beta model.
/// `bytes` is the payload per rank and `bandwidth` is in bytes per second.
double collective_time(CollKind kind, std::uint64_t bytes, std::size_t n, double bandwidth,
                       double alpha);

struct ControlPolicy {
  bool provisioning = false;
  /// Iterations simulated back to back; the first one is profiled and the
  /// last one is reported.
  std::uint32_t iterations = 3;
  double alpha = 1e-6;
};

std::string policy_name(const ControlPolicy& policy);

struct EventTiming {
  EventId event = 0;
  double start = 0.0;
  double end = 0.0;
  std::vector<std::pair<RankId, double>> joins;  // collectives only
};

struct TransferRecord {
  EventId event = 0;
  std::uint32_t iteration = 0;
  GroupId group;
  RailId rail = 0;
  std::vector<PortId> ports;
  double start = 0.0;
  double end = 0.0;
};

struct SimResult {
  double makespan = 0.0;  // of the reported iteration
  double baseline_makespan = 0.0;
  double overhead = 1.0;  // makespan / baseline_makespan
  /// Reported iteration, DAG order, times relative to its start.
  std::vector<EventTiming> event_times;
  /// Reconfigurations issued during the reported iteration, relative times.
  std::vector<ReconfigLogEntry> reconfig_log;

  // Audit trail over every simulated iteration, absolute times.
  std::vector<double> iteration_starts;
  std::vector<ReconfigLogEntry> full_reconfig_log;
  std::vector<TransferRecord> transfers;
  std::vector<CircuitInterval> circuits;
  /// Upper bound on reconfigurations per iteration: for each group, the most
  /// times one member switches into it over the profiled iteration (cyclic).
  std::size_t profiled_transitions = 0;
};

/// Simulates `policy.iterations` iterations of the DAG. OCS rails also run
/// the electrical baseline to fill in the overhead. Throws DegreeInfeasible,
/// UnsupportedKind and ConflictDeadlock.
SimResult simulate(const EventDag& dag, const Topology& topo, const ControlPolicy& policy);

/// Per-rail collective timings of the reported iteration, in the form the
/// window analysis consumes.
std::vector<CollectiveTiming> rail_timeline(const EventDag& dag, const Topology& topo,
                                            const SimResult& result, RailId rail);

/// Copy of the DAG whose events carry the reported iteration's timings as
/// observed timestamps: compute events their start and end, collectives each
/// rank's join time and the common end.
EventDag with_observed(const EventDag& dag, const SimResult& result);

struct SweepRow {
  double delay = 0.0;
  std::string policy;
  double makespan = 0.0;
  double overhead = 1.0;
};

/// Makespan per (delay, policy) on the topology's rails switched to OCS with
/// each delay. Rows follow input order; `jobs` > 1 runs points in parallel.
std::vector<SweepRow> sweep_delay(const EventDag& dag, const Topology& topo,
                                  const std::vector<double>& delays,
                                  const std::vector<ControlPolicy>& policies, unsigned jobs = 1);

/// Audits over a result's full logs. Each returns a description per violation.
std::vector<std::string> audit_port_sharing(const SimResult& result);
std::vector<std::string> audit_reconfig_vs_transfer(const SimResult& result);
std::vector<std::string> audit_degree(const SimResult& result, std::uint32_t ports_per_rank);

}  // namespace opus

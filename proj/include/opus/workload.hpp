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

// Per-iteration event DAGs for hybrid-parallel training.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opus/model.hpp"

namespace opus {

using EventId = std::uint32_t;

enum class EventKind { Compute, Collective };
enum class CollKind { None, AllReduce, AllGather, ReduceScatter, SendRecv, AllToAll };

std::string to_string(CollKind kind);
CollKind parse_coll_kind(const std::string& text);

/// Per-rank timestamps captured in a trace.
struct Observed {
  RankId rank = 0;
  double start = 0.0;
  double end = 0.0;
};

struct Event {
  EventId id = 0;
  EventKind kind = EventKind::Compute;
  std::vector<RankId> ranks;  // sorted
  GroupId group;              // collectives only
  CollKind coll = CollKind::None;
  std::uint64_t bytes = 0;    // payload per participating rank
  std::vector<EventId> deps;  // sorted, unique
  std::uint32_t stream = 0;
  double duration = 0.0;      // compute only, seconds
  std::vector<Observed> observed;

  bool is_collective() const { return kind == EventKind::Collective; }
};

/// Events plus the communication groups they reference. Ids are unique but
/// not necessarily dense when the DAG comes from a trace.
class EventDag {
 public:
  EventDag() = default;
  EventDag(std::vector<CommGroup> groups, std::vector<Event> events);

  const std::vector<Event>& events() const { return events_; }
  const std::vector<CommGroup>& groups() const { return groups_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  std::size_t index_of(EventId id) const;
  const Event& event(EventId id) const { return events_[index_of(id)]; }
  const CommGroup* find_group(const GroupId& id) const;
  const CommGroup& group(const GroupId& id) const;

  /// Event indices in a deterministic topological order (smallest id first
  /// among ready events). Throws CyclicDependency.
  std::vector<std::size_t> topological_order() const;

 private:
  std::vector<CommGroup> groups_;
  std::vector<Event> events_;
  std::map<EventId, std::size_t> index_;
  std::map<GroupId, std::size_t> group_index_;
};

struct ComputeTimes {
  double forward_per_layer = 0.030;
  double backward_per_layer = 0.060;
  double grad_update = 0.010;     // before the gradient ReduceScatters
  double norm_compute = 0.005;    // before the synchronization AllReduces
  double sync_gap = 0.002;        // between synchronization AllReduces
  double optimizer_step = 0.050;
};

struct WorkloadParams {
  std::uint32_t pp = 1;
  std::uint32_t dp = 1;
  std::uint32_t tp = 1;
  std::uint32_t n_layer = 1;
  std::uint32_t n_microbatch = 1;
  std::uint64_t bytes_per_layer_param = 0;  // FSDP AllGather payload
  std::uint64_t bytes_per_layer_grad = 0;   // ReduceScatter payload; 0 means param size
  std::uint64_t bytes_activation = 0;       // PP SendRecv and TP AllReduce payload
  std::uint64_t bytes_sync_allreduce = 0;
  ComputeTimes compute;
  double jitter = 0.0;  // uniform relative noise on compute durations
  std::uint64_t seed = 0;
};

/// Stream ids used by the generator.
namespace streams {
inline constexpr std::uint32_t kCompute = 0;
inline constexpr std::uint32_t kDataParallel = 1;
inline constexpr std::uint32_t kPipeline = 2;  // activations and PP sync
inline constexpr std::uint32_t kTensor = 3;
inline constexpr std::uint32_t kPipelineGrad = 4;
}  // namespace streams

/// One training iteration of TP x FSDP x PP with a 1F1B pipeline schedule.
/// TP spans a whole scale-up domain; domain index = stage * dp + dp_index.
EventDag generate_3d_schedule(const WorkloadParams& params, const Topology& topo);

/// Reads a trace file; see write_trace for the format.
EventDag load_trace(const std::string& path, const Topology& topo);
EventDag parse_trace(const std::string& text, const Topology& topo);

/// Serializes a DAG in the line-delimited trace format: `#group` directive
/// lines, a header row, then one row per (event, rank) in topological order.
/// Observed timestamps are written when the event carries them.
std::string write_trace(const EventDag& dag);

enum class ViolationKind { CyclicDependency, MembershipViolation, StreamOrder, UnknownReference };

struct Violation {
  ViolationKind kind;
  EventId event = 0;
  std::string detail;
};

std::vector<Violation> validate_dag(const EventDag& dag);

}  // namespace opus

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

// Idle windows between parallelism phases on a rail.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "opus/model.hpp"
#include "opus/workload.hpp"

namespace opus {

/// One collective as seen on a rail: when each member rank joined it and
/// when it finished (the same instant for every member).
struct CollectiveTiming {
  EventId event = 0;
  GroupId group;
  Axis axis = Axis::DP;
  std::uint64_t bytes = 0;
  std::vector<std::pair<RankId, double>> rank_starts;
  double end = 0.0;

  /// A collective starts only when its slowest member joins.
  double comm_start() const;
};

struct Phase {
  std::uint32_t id = 0;
  std::vector<GroupId> groups;  // sorted, unique
  std::vector<EventId> events;  // in start order
};

struct Window {
  RailId rail = 0;
  std::uint32_t before_phase = 0;
  std::uint32_t after_phase = 0;
  double start = 0.0;
  double end = 0.0;
  double size = 0.0;
  std::uint64_t next_volume_bytes = 0;
  std::string volume_class;
};

/// Phase pair whose second phase starts before the first one ends.
struct Overlap {
  RailId rail = 0;
  std::uint32_t before_phase = 0;
  std::uint32_t after_phase = 0;
  double magnitude = 0.0;
};

struct WindowSet {
  std::vector<Window> windows;
  std::vector<Overlap> overlaps;
};

/// Axes whose collectives form one phase share a class; DP and FSDP do.
int axis_class(Axis axis);

/// Collectives of one rail taken from the observed timestamps a trace carries.
/// TP collectives never touch a rail and are skipped.
std::vector<CollectiveTiming> observed_rail_timeline(const EventDag& dag, const Topology& topo,
                                                     RailId rail);

/// Splits a rail timeline into maximal runs of collectives from the same
/// parallelism axis (DP and FSDP count as one), ordered by start time.
std::vector<Phase> segment_phases(std::span<const CollectiveTiming> timeline);

/// Window between every pair of consecutive phases: from the last end in the
/// first phase to the earliest start in the second. Throws EmptyPhase.
WindowSet extract_windows(std::span<const CollectiveTiming> timeline, std::span<const Phase> phases,
                          RailId rail);

/// Convenience: segment then extract.
WindowSet rail_windows(std::span<const CollectiveTiming> timeline, RailId rail);

struct CdfPoint {
  double size = 0.0;
  double fraction = 0.0;
};

/// Empirical CDF over window sizes, one point per distinct size. Throws EmptyInput.
std::vector<CdfPoint> window_cdf(std::span<const Window> windows);

/// Default volume class edges in bytes: 1 MB, 64 MB, 957 MB, 3829 MB.
std::vector<std::uint64_t> default_class_edges();

/// Label of the class holding `bytes`; a value on an edge belongs to the upper class.
std::string volume_class(std::uint64_t bytes, std::span<const std::uint64_t> edges);

/// Fills in Window::volume_class for every window.
void label_windows(std::vector<Window>& windows, std::span<const std::uint64_t> edges);

struct VolumeClassStats {
  std::string label;
  std::uint64_t lower_bytes = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Per-class window size statistics, one entry per class (empty classes included).
std::vector<VolumeClassStats> classify_by_volume(std::span<const Window> windows,
                                                 std::span<const std::uint64_t> edges);

/// Upper bound on windows per iteration for FSDP + PP jobs, optionally with
/// CP and/or EP. Terms tied to CP/EP are included only when those are present.
std::uint64_t window_count_bound(std::uint32_t pp, std::uint32_t n_layer, std::uint32_t n_microbatch,
                        bool has_cp, bool has_ep);

}  // namespace opus

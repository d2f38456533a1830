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

#include "opus/windows.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "opus/error.hpp"

namespace opus {

double CollectiveTiming::comm_start() const {
  double t = -std::numeric_limits<double>::infinity();
  for (const auto& [rank, start] : rank_starts) t = std::max(t, start);
  return t;
}

std::vector<CollectiveTiming> observed_rail_timeline(const EventDag& dag, const Topology& topo,
                                                     RailId rail) {
  std::vector<CollectiveTiming> out;
  for (const auto& e : dag.events()) {
    if (!e.is_collective() || e.observed.empty()) continue;
    const CommGroup& g = dag.group(e.group);
    if (!is_scale_out(g.axis) || topo.rank(e.ranks.front()).rail() != rail) continue;
    CollectiveTiming t{e.id, e.group, g.axis, e.bytes, {}, 0.0};
    for (const auto& o : e.observed) {
      t.rank_starts.emplace_back(o.rank, o.start);
      t.end = std::max(t.end, o.end);
    }
    out.push_back(std::move(t));
  }
  return out;
}

int axis_class(Axis a) {
  switch (a) {
    case Axis::DP:
    case Axis::FSDP: return 0;
    case Axis::PP: return 1;
    case Axis::CP: return 2;
    case Axis::EP: return 3;
    case Axis::TP: return 4;
  }
  return 5;
}

std::vector<Phase> segment_phases(std::span<const CollectiveTiming> timeline) {
  std::vector<const CollectiveTiming*> sorted;
  for (const auto& c : timeline) {
    if (is_scale_out(c.axis)) sorted.push_back(&c);
  }
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    const double sa = a->comm_start(), sb = b->comm_start();
    return sa != sb ? sa < sb : a->event < b->event;
  });
  std::vector<Phase> phases;
  int current = -1;
  for (const auto* c : sorted) {
    const int cls = axis_class(c->axis);
    if (phases.empty() || cls != current) {
      phases.push_back(Phase{static_cast<std::uint32_t>(phases.size()), {}, {}});
      current = cls;
    }
    Phase& p = phases.back();
    p.events.push_back(c->event);
    if (std::find(p.groups.begin(), p.groups.end(), c->group) == p.groups.end()) {
      p.groups.push_back(c->group);
    }
  }
  for (auto& p : phases) std::sort(p.groups.begin(), p.groups.end());
  return phases;
}

WindowSet extract_windows(std::span<const CollectiveTiming> timeline, std::span<const Phase> phases,
                          RailId rail) {
  std::map<EventId, const CollectiveTiming*> by_id;
  for (const auto& c : timeline) by_id.emplace(c.event, &c);
  auto resolve = [&](const Phase& p) {
    std::vector<const CollectiveTiming*> out;
    for (EventId id : p.events) {
      if (auto it = by_id.find(id); it != by_id.end()) out.push_back(it->second);
    }
    if (out.empty()) throw Error(ErrorCode::EmptyPhase, fmt::format("phase {} has no events", p.id));
    return out;
  };

  WindowSet out;
  for (std::size_t n = 1; n < phases.size(); ++n) {
    const auto before = resolve(phases[n - 1]);
    const auto after = resolve(phases[n]);
    double start = -std::numeric_limits<double>::infinity();
    for (const auto* c : before) start = std::max(start, c->end);
    double end = std::numeric_limits<double>::infinity();
    const CollectiveTiming* first = nullptr;
    for (const auto* c : after) {
      const double s = c->comm_start();
      if (first == nullptr || s < end || (s == end && c->event < first->event)) {
        end = s;
        first = c;
      }
    }
    if (end >= start) {
      out.windows.push_back(Window{rail, phases[n - 1].id, phases[n].id, start, end, end - start,
                                   first->bytes, ""});
    } else {
      out.overlaps.push_back(Overlap{rail, phases[n - 1].id, phases[n].id, start - end});
    }
  }
  return out;
}

WindowSet rail_windows(std::span<const CollectiveTiming> timeline, RailId rail) {
  const auto phases = segment_phases(timeline);
  return extract_windows(timeline, phases, rail);
}

std::vector<CdfPoint> window_cdf(std::span<const Window> windows) {
  if (windows.empty()) throw Error(ErrorCode::EmptyInput, "no windows to build a CDF from");
  std::vector<double> sizes;
  for (const auto& w : windows) sizes.push_back(w.size);
  std::sort(sizes.begin(), sizes.end());
  std::vector<CdfPoint> cdf;
  const double n = static_cast<double>(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i + 1 < sizes.size() && sizes[i + 1] == sizes[i]) continue;
    cdf.push_back(CdfPoint{sizes[i], static_cast<double>(i + 1) / n});
  }
  return cdf;
}

std::vector<std::uint64_t> default_class_edges() {
  return {1'000'000, 64'000'000, 957'000'000, 3'829'000'000};
}

namespace {

std::string mb_label(std::uint64_t bytes) {
  if (bytes % 1'000'000 == 0) return fmt::format("{}MB", bytes / 1'000'000);
  return fmt::format("{}B", bytes);
}

void check_edges(std::span<const std::uint64_t> edges) {
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) {
      throw Error(ErrorCode::InvalidParams, "volume class edges must be strictly increasing");
    }
  }
}

std::size_t class_index(std::uint64_t bytes, std::span<const std::uint64_t> edges) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), bytes) - edges.begin());
}

std::string class_label(std::size_t idx, std::span<const std::uint64_t> edges) {
  if (edges.empty()) return "all";
  if (idx == 0) return "<" + mb_label(edges.front());
  return mb_label(edges[idx - 1]);
}

}  // namespace

std::string volume_class(std::uint64_t bytes, std::span<const std::uint64_t> edges) {
  check_edges(edges);
  return class_label(class_index(bytes, edges), edges);
}

void label_windows(std::vector<Window>& windows, std::span<const std::uint64_t> edges) {
  for (auto& w : windows) w.volume_class = volume_class(w.next_volume_bytes, edges);
}

std::vector<VolumeClassStats> classify_by_volume(std::span<const Window> windows,
                                                 std::span<const std::uint64_t> edges) {
  check_edges(edges);
  std::vector<VolumeClassStats> stats(edges.size() + 1);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    stats[i].label = class_label(i, edges);
    stats[i].lower_bytes = i == 0 ? 0 : edges[i - 1];
  }
  for (const auto& w : windows) {
    auto& s = stats[class_index(w.next_volume_bytes, edges)];
    if (s.count == 0) {
      s.min = s.max = w.size;
    } else {
      s.min = std::min(s.min, w.size);
      s.max = std::max(s.max, w.size);
    }
    s.mean += w.size;
    ++s.count;
  }
  for (auto& s : stats) {
    if (s.count) s.mean /= static_cast<double>(s.count);
  }
  return stats;
}

std::uint64_t window_count_bound(std::uint32_t pp, std::uint32_t n_layer, std::uint32_t n_microbatch,
                        bool has_cp, bool has_ep) {
  if (pp < 1 || n_layer < 1 || n_layer % pp != 0) {
    throw Error(ErrorCode::InvalidParams,
                fmt::format("window bound needs pp >= 1 dividing n_layer (pp={}, n_layer={})", pp,
                            n_layer));
  }
  const std::uint64_t layers = n_layer / pp;
  std::uint64_t total = 4 * (std::uint64_t{pp} - 1) + 4;
  if (has_cp || has_ep) total += (2 * layers - 1) + 4 * std::uint64_t{n_microbatch};
  if (has_cp && has_ep) total += 2 * std::uint64_t{n_microbatch} * (2 * layers - 1);
  return total;
}

}  // namespace opus

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

#include <random>

#include "helpers.hpp"
#include "opus/fabric.hpp"
#include "opus/windows.hpp"
#include "oracles.hpp"

using namespace opus;
using namespace opus::testing;

namespace {

CollectiveTiming coll(EventId id, Axis axis, std::vector<double> starts, double end,
                      std::uint64_t bytes = 0) {
  CollectiveTiming c{id, fmt::format("{}{}", to_string(axis), id), axis, bytes, {}, end};
  for (std::size_t r = 0; r < starts.size(); ++r) c.rank_starts.emplace_back(static_cast<RankId>(r), starts[r]);
  return c;
}

Phase phase(std::uint32_t id, std::vector<EventId> events) { return Phase{id, {}, std::move(events)}; }

bool same(const WindowSet& a, const WindowSet& b) {
  if (a.windows.size() != b.windows.size() || a.overlaps.size() != b.overlaps.size()) return false;
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    const Window& x = a.windows[i];
    const Window& y = b.windows[i];
    if (x.rail != y.rail || x.before_phase != y.before_phase || x.after_phase != y.after_phase ||
        x.start != y.start || x.end != y.end || x.size != y.size || x.next_volume_bytes != y.next_volume_bytes) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.overlaps.size(); ++i) {
    const Overlap& x = a.overlaps[i];
    const Overlap& y = b.overlaps[i];
    if (x.before_phase != y.before_phase || x.after_phase != y.after_phase || x.magnitude != y.magnitude) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("window is bounded by the slowest joining rank") {
  const std::vector<CollectiveTiming> tl{coll(1, Axis::PP, {4.0}, 5.0), coll(2, Axis::DP, {7.0, 9.0}, 10.0, 64)};
  const std::vector<Phase> ph{phase(0, {1}), phase(1, {2})};
  const auto ws = extract_windows(tl, ph, 0);
  REQUIRE(ws.windows.size() == 1);
  CHECK(ws.windows[0].start == 5.0);
  CHECK(ws.windows[0].end == 9.0);
  CHECK(ws.windows[0].size == 4.0);
  CHECK(ws.windows[0].next_volume_bytes == 64);
}

TEST_CASE("window spans the latest end to the earliest start") {
  const std::vector<CollectiveTiming> tl{coll(1, Axis::PP, {1.0}, 5.0), coll(0, Axis::PP, {1.0}, 6.0),
                                         coll(2, Axis::DP, {6.5}, 7.0), coll(3, Axis::DP, {8.0}, 9.0)};
  const std::vector<Phase> ph{phase(0, {1, 0}), phase(1, {2, 3})};
  const auto ws = extract_windows(tl, ph, 0);
  REQUIRE(ws.windows.size() == 1);
  CHECK(ws.windows[0].start == 6.0);
  CHECK(ws.windows[0].end == 6.5);
  CHECK(ws.windows[0].size == doctest::Approx(0.5));
}

TEST_CASE("negative gaps become overlaps") {
  const std::vector<CollectiveTiming> tl{coll(1, Axis::PP, {0.0}, 5.0), coll(2, Axis::DP, {4.0}, 6.0)};
  const auto ws = extract_windows(tl, std::vector<Phase>{phase(0, {1}), phase(1, {2})}, 0);
  CHECK(ws.windows.empty());
  REQUIRE(ws.overlaps.size() == 1);
  CHECK(ws.overlaps[0].magnitude == 1.0);
}

TEST_CASE("an empty phase is an error") {
  const std::vector<CollectiveTiming> tl{coll(1, Axis::PP, {0.0}, 5.0)};
  CHECK(error_of([&] { extract_windows(tl, std::vector<Phase>{phase(0, {1}), phase(1, {})}, 0); }) ==
        ErrorCode::EmptyPhase);
}

TEST_CASE("phases are maximal same-axis runs and skip TP") {
  const std::vector<CollectiveTiming> tl{coll(5, Axis::FSDP, {0.0}, 1.0), coll(6, Axis::DP, {1.0}, 2.0),
                                         coll(7, Axis::TP, {2.0}, 2.5), coll(8, Axis::PP, {3.0}, 4.0),
                                         coll(9, Axis::DP, {5.0}, 6.0)};
  const auto ph = segment_phases(tl);
  REQUIRE(ph.size() == 3);
  CHECK(ph[0].events == std::vector<EventId>{5, 6});
  CHECK(ph[1].events == std::vector<EventId>{8});
  CHECK(ph[2].events == std::vector<EventId>{9});
  for (std::size_t i = 1; i < ph.size(); ++i) {
    for (const auto& g : ph[i].groups) {
      CHECK(std::find(ph[i - 1].groups.begin(), ph[i - 1].groups.end(), g) == ph[i - 1].groups.end());
    }
  }
}

TEST_CASE("extract_windows agrees with the brute-force oracle") {
  std::mt19937_64 rng(20250101);
  for (int t = 0; t < 300; ++t) {
    const auto tl = oracle::random_timeline(rng, 50, 8);
    const auto ph = segment_phases(tl);
    CHECK(same(extract_windows(tl, ph, 3), oracle::brute_force_windows(tl, ph, 3)));
  }
}

TEST_CASE("identical rail timelines give identical windows") {
  std::mt19937_64 rng(5);
  const auto tl = oracle::random_timeline(rng, 40, 6);
  const auto a = rail_windows(tl, 0);
  const auto b = rail_windows(tl, 1);
  REQUIRE(a.windows.size() == b.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    CHECK(a.windows[i].start == b.windows[i].start);
    CHECK(a.windows[i].size == b.windows[i].size);
  }
}

TEST_CASE("window CDF") {
  std::vector<Window> ws;
  for (double s : {3.0, 1.0, 4.0, 2.0}) ws.push_back(Window{0, 0, 1, 0.0, s, s, 0, ""});
  const auto cdf = window_cdf(ws);
  REQUIRE(cdf.size() == 4);
  CHECK(cdf[1].size == 2.0);
  CHECK(cdf[1].fraction == 0.5);
  CHECK(cdf.back().fraction == 1.0);

  std::vector<Window> equal(3, Window{0, 0, 1, 0.0, 2.0, 2.0, 0, ""});
  const auto step = window_cdf(equal);
  REQUIRE(step.size() == 1);
  CHECK(step[0].fraction == 1.0);
  CHECK(error_of([] { window_cdf(std::vector<Window>{}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("volume classes") {
  const auto edges = default_class_edges();
  CHECK(volume_class(4096, edges) == "<1MB");
  CHECK(volume_class(64'000'000, edges) == "64MB");
  CHECK(volume_class(957'000'000, edges) == "957MB");
  CHECK(volume_class(3'829'000'000, edges) == "3829MB");
  CHECK(volume_class(63'999'999, edges) == "1MB");

  std::vector<Window> one{Window{0, 0, 1, 0.0, 0.5, 0.5, 64'000'000, ""}};
  std::size_t nonempty = 0;
  for (const auto& st : classify_by_volume(one, edges)) nonempty += st.count > 0 ? 1 : 0;
  CHECK(nonempty == 1);

  const std::vector<std::uint64_t> bad{5, 5};
  CHECK(error_of([&] { volume_class(1, bad); }) == ErrorCode::InvalidParams);
}

TEST_CASE("window count bound") {
  CHECK(window_count_bound(2, 32, 2, true, true) == 171);
  CHECK(window_count_bound(1, 7, 3, false, false) == 4);
  CHECK(window_count_bound(2, 32, 2, false, false) == 8);
  CHECK(window_count_bound(2, 32, 2, true, false) == 4 + 31 + 8 + 4);
  CHECK(error_of([] { window_count_bound(3, 32, 2, false, false); }) == ErrorCode::InvalidParams);
  CHECK(error_of([] { window_count_bound(0, 32, 2, false, false); }) == ErrorCode::InvalidParams);
}

TEST_CASE("observed trace timelines match simulated ones") {
  const Topology topo = build_topology(spec(4, 4));
  const EventDag dag = generate_3d_schedule(params(2, 2, 4, 8, 2), topo);
  const SimResult res = simulate(dag, topo, ControlPolicy{false, 1});
  const EventDag replay = with_observed(dag, res);
  for (RailId rail = 0; rail < 4; ++rail) {
    const auto a = rail_windows(rail_timeline(dag, topo, res, rail), rail);
    const auto b = rail_windows(observed_rail_timeline(replay, topo, rail), rail);
    CHECK(same(a, b));
  }
}

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

#include <deque>
#include <map>
#include <set>

#include "helpers.hpp"
#include "opus/fabric.hpp"

using namespace opus;
using namespace opus::testing;

namespace {

// Independent 1F1B executor: each stage runs its op list in order and blocks
// on receives until the matching send has happened. Returns the number of
// messages exchanged between adjacent stages, or -1 on deadlock.
struct Op {
  enum Kind { Fwd, Bwd, SendF, RecvF, SendB, RecvB } kind;
  std::uint32_t mb;
};

std::vector<Op> one_f_one_b(std::uint32_t s, std::uint32_t pp, std::uint32_t mb) {
  std::vector<Op> ops;
  const bool first = s == 0, last = s + 1 == pp;
  const std::uint32_t warm = std::min(pp - s - 1, mb);
  std::uint32_t f = 0, b = 0;
  auto forward = [&] {
    if (!first) ops.push_back({Op::RecvF, f});
    ops.push_back({Op::Fwd, f});
    if (!last) ops.push_back({Op::SendF, f});
    ++f;
  };
  auto backward = [&] {
    if (!last) ops.push_back({Op::RecvB, b});
    ops.push_back({Op::Bwd, b});
    if (!first) ops.push_back({Op::SendB, b});
    ++b;
  };
  for (std::uint32_t i = 0; i < warm; ++i) forward();
  for (std::uint32_t i = warm; i < mb; ++i) {
    forward();
    backward();
  }
  while (b < mb) backward();
  return ops;
}

long enumerate_messages(std::uint32_t pp, std::uint32_t mb) {
  std::vector<std::vector<Op>> prog;
  for (std::uint32_t s = 0; s < pp; ++s) prog.push_back(one_f_one_b(s, pp, mb));
  std::vector<std::size_t> pc(pp, 0);
  std::set<std::tuple<std::uint32_t, int, std::uint32_t>> in_flight;  // (dst stage, kind, mb)
  long messages = 0;
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::uint32_t s = 0; s < pp; ++s) {
      while (pc[s] < prog[s].size()) {
        const Op& op = prog[s][pc[s]];
        if (op.kind == Op::RecvF || op.kind == Op::RecvB) {
          auto key = std::make_tuple(s, static_cast<int>(op.kind), op.mb);
          if (!in_flight.erase(key)) break;
        } else if (op.kind == Op::SendF) {
          in_flight.insert({s + 1, Op::RecvF, op.mb});
          ++messages;
        } else if (op.kind == Op::SendB) {
          in_flight.insert({s - 1, Op::RecvB, op.mb});
          ++messages;
        }
        ++pc[s];
        progress = true;
      }
    }
  }
  for (std::uint32_t s = 0; s < pp; ++s) {
    if (pc[s] != prog[s].size()) return -1;
  }
  return in_flight.empty() ? messages : -1;
}

EventDag generate(std::uint32_t pp, std::uint32_t dp, std::uint32_t g, std::uint32_t layers,
                  std::uint32_t mb) {
  const Topology topo(spec(pp * dp, g));
  return generate_3d_schedule(params(pp, dp, g, layers, mb), topo);
}

}  // namespace

TEST_CASE("generated DAGs validate cleanly") {
  for (std::uint32_t pp : {1u, 2u, 3u, 4u}) {
    for (std::uint32_t dp : {1u, 2u, 3u}) {
      if (pp * dp < 2) continue;
      for (std::uint32_t mb : {1u, 2u, 4u}) {
        const EventDag dag = generate(pp, dp, 2, pp * 4, mb);
        CHECK(validate_dag(dag).empty());
        CHECK_NOTHROW(dag.topological_order());
      }
    }
  }
}

TEST_CASE("generation is deterministic") {
  const Topology topo(spec(4, 4));
  auto p = params(2, 2, 4, 8, 2);
  p.jitter = 0.2;
  p.seed = 11;
  auto durations = [&] {
    std::vector<double> d;
    for (const auto& e : generate_3d_schedule(p, topo).events()) d.push_back(e.duration);
    return d;
  };
  const auto a = durations();
  CHECK(a == durations());
  CHECK(write_trace(generate_3d_schedule(p, topo)) == write_trace(generate_3d_schedule(p, topo)));
  p.seed = 12;
  CHECK(durations() != a);
}

TEST_CASE("parameter validation names the broken constraint") {
  const Topology topo(spec(4, 4));
  try {
    generate_3d_schedule(params(2, 3, 4, 8, 2), topo);
    FAIL("expected InvalidParams");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParams);
    CHECK(std::string(e.what()).find("pp x dp x tp") != std::string::npos);
  }
  CHECK(error_of([&] { generate_3d_schedule(params(2, 2, 4, 9, 2), topo); }) == ErrorCode::InvalidParams);
  CHECK(error_of([&] { generate_3d_schedule(params(4, 2, 2, 8, 2), topo); }) == ErrorCode::InvalidParams);
  CHECK(error_of([&] { generate_3d_schedule(params(2, 2, 4, 8, 0), topo); }) == ErrorCode::InvalidParams);
}

TEST_CASE("SendRecv count per pipeline matches a 1F1B enumerator") {
  for (std::uint32_t pp = 1; pp <= 4; ++pp) {
    for (std::uint32_t mb = 1; mb <= 4; ++mb) {
      const std::uint32_t dp = pp == 1 ? 2 : 2;
      const EventDag dag = generate(pp, dp, 2, pp * 2, mb);
      const long expected = enumerate_messages(pp, mb);
      REQUIRE(expected >= 0);
      CHECK(expected == 2L * mb * (pp - 1));
      // Per rail and per data-parallel lane.
      std::map<std::pair<RailId, RankId>, long> count;
      for (const auto& e : dag.events()) {
        if (e.coll != CollKind::SendRecv) continue;
        const RankId lowest = e.ranks.front();
        const RailId rail = lowest % 2;
        const RankId lane = (lowest / 2) % dp;
        ++count[{rail, lane}];
      }
      if (pp == 1) {
        CHECK(count.empty());
        continue;
      }
      CHECK(count.size() == 2 * dp);
      for (const auto& [key, n] : count) CHECK(n == expected);
    }
  }
}

TEST_CASE("rail 0 of the 2x2x4 job walks AG, SendRecv, RS and the sync AllReduces") {
  const Topology topo(spec(4, 4));
  const EventDag dag = generate_3d_schedule(params(2, 2, 4, 8, 2), topo);
  const SimResult res = simulate(dag, topo, ControlPolicy{false, 1});
  // Rank 0 is stage 0 on rail 0.
  std::vector<std::pair<double, std::size_t>> mine;
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const Event& e = dag.events()[i];
    if (!e.is_collective() || !std::binary_search(e.ranks.begin(), e.ranks.end(), 0u)) continue;
    if (dag.group(e.group).axis == Axis::TP) continue;
    mine.emplace_back(res.event_times[i].start, i);
  }
  std::sort(mine.begin(), mine.end());
  std::vector<std::string> phases;
  for (const auto& [t, i] : mine) {
    const Event& e = dag.events()[i];
    std::string label = to_string(e.coll) + "/" + to_string(dag.group(e.group).axis);
    if (phases.empty() || phases.back() != label) phases.push_back(label);
  }
  const std::vector<std::string> expected{"AllGather/FSDP", "SendRecv/PP", "ReduceScatter/FSDP",
                                          "AllReduce/PP", "AllReduce/FSDP"};
  CHECK(phases == expected);
}

TEST_CASE("stage 1 gathers lazily after its inbound activation") {
  const Topology topo(spec(4, 4));
  const EventDag dag = generate_3d_schedule(params(2, 2, 4, 8, 2), topo);
  const SimResult res = simulate(dag, topo, ControlPolicy{false, 1});
  double first_recv = 1e18, first_gather = 1e18;
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const Event& e = dag.events()[i];
    // Rank 8 is stage 1, lane 0, rail 0.
    if (!std::binary_search(e.ranks.begin(), e.ranks.end(), 8u)) continue;
    if (e.coll == CollKind::SendRecv) first_recv = std::min(first_recv, res.event_times[i].end);
    if (e.coll == CollKind::AllGather) first_gather = std::min(first_gather, res.event_times[i].start);
  }
  CHECK(first_gather >= first_recv);
}

TEST_CASE("gathers precede the compute they feed and scatters follow backward") {
  const Topology topo(spec(4, 2));
  const EventDag dag = generate_3d_schedule(params(2, 2, 2, 8, 3), topo);
  const SimResult res = simulate(dag, topo, ControlPolicy{false, 1});
  std::map<RankId, std::size_t> fed;
  std::map<RankId, double> last_compute_before_rs;
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const Event& e = dag.events()[i];
    if (e.is_collective()) continue;
    for (EventId d : e.deps) {
      const Event& dep = dag.event(d);
      if (dep.coll != CollKind::AllGather) continue;
      CHECK(res.event_times[dag.index_of(d)].end <= res.event_times[i].start);
      ++fed[e.ranks.front()];
    }
  }
  // Every rank gathers each of its 4 layers once, before the first microbatch.
  CHECK(fed.size() == 8);
  for (const auto& [r, n] : fed) CHECK(n == 4);

  for (RankId r = 0; r < 8; ++r) {
    double last_backward_end = 0.0, first_rs_start = 1e18;
    for (std::size_t i = 0; i < dag.size(); ++i) {
      const Event& e = dag.events()[i];
      if (!std::binary_search(e.ranks.begin(), e.ranks.end(), r)) continue;
      if (e.coll == CollKind::ReduceScatter) first_rs_start = std::min(first_rs_start, res.event_times[i].start);
      if (!e.is_collective() && e.duration == params(2, 2, 2, 8, 3).compute.backward_per_layer) {
        last_backward_end = std::max(last_backward_end, res.event_times[i].end);
      }
    }
    CHECK(first_rs_start >= last_backward_end);
  }
}

TEST_CASE("pp=3: a stage's DP AllGather runs while other stages exchange activations") {
  const Topology topo(spec(6, 2));
  const EventDag dag = generate_3d_schedule(params(3, 2, 2, 12, 4), topo);
  const SimResult res = simulate(dag, topo, ControlPolicy{false, 1});
  // Warm-up and steady phases both show up in the schedule.
  bool concurrent = false;
  for (std::size_t i = 0; i < dag.size() && !concurrent; ++i) {
    const Event& ag = dag.events()[i];
    if (ag.coll != CollKind::AllGather || ag.group.rfind("dp.s2.", 0) != 0) continue;
    for (std::size_t j = 0; j < dag.size(); ++j) {
      const Event& sr = dag.events()[j];
      if (sr.coll != CollKind::SendRecv) continue;
      bool other_stage = true;
      for (RankId r : sr.ranks) other_stage = other_stage && !std::binary_search(ag.ranks.begin(), ag.ranks.end(), r);
      const auto& a = res.event_times[i];
      const auto& b = res.event_times[j];
      if (other_stage && a.start < b.end && b.start < a.end) {
        concurrent = true;
        break;
      }
    }
  }
  CHECK(concurrent);
}

TEST_CASE("validate_dag reports cycles, membership and references") {
  const Topology topo(spec(2, 1));
  std::vector<CommGroup> groups{make_group(topo, "dp", Axis::DP, {0, 1})};

  Event a;
  a.id = 1;
  a.ranks = {0};
  a.deps = {2};
  Event b;
  b.id = 2;
  b.ranks = {0};
  b.deps = {1};
  const EventDag cyclic(groups, {a, b});
  bool found = false;
  for (const auto& v : validate_dag(cyclic)) found = found || v.kind == ViolationKind::CyclicDependency;
  CHECK(found);
  CHECK(error_of([&] { cyclic.topological_order(); }) == ErrorCode::CyclicDependency);

  Event c;
  c.id = 3;
  c.kind = EventKind::Collective;
  c.coll = CollKind::AllReduce;
  c.group = "dp";
  c.ranks = {0};
  const EventDag missing(groups, {c});
  const auto v = validate_dag(missing);
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == ViolationKind::MembershipViolation);
}

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

#include <cmath>

#include "helpers.hpp"
#include "opus/fabric.hpp"

using namespace opus;
using namespace opus::testing;

namespace {

const char* kHeaderLine =
    "event_id,rank,stream,kind,coll_kind,group_id,bytes,dep_ids,observed_start_s,observed_end_s\n";

std::string trace(const std::string& rows) {
  return std::string("# opus trace v1\n#group,dp,DP,0;1\n") + kHeaderLine + rows;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty trace gives an empty DAG") {
  const Topology topo(spec(2, 1));
  CHECK(parse_trace("", topo).empty());
  CHECK(parse_trace(trace(""), topo).empty());
}

TEST_CASE("records on one rank and stream execute in file order") {
  const Topology topo(spec(2, 1));
  const EventDag dag = parse_trace(trace("5,0,0,compute,,,0,,0,1\n"
                                         "3,0,0,compute,,,0,,1,3\n"
                                         "4,1,0,compute,,,0,,0,2\n"),
                                   topo);
  CHECK(dag.event(3).deps == std::vector<EventId>{5});
  CHECK(dag.event(4).deps.empty());
  CHECK(dag.event(3).duration == doctest::Approx(2.0));
}

TEST_CASE("collectives span ranks and keep per-rank observations") {
  const Topology topo(spec(2, 1));
  const EventDag dag = parse_trace(trace("1,0,0,compute,,,0,,0,1\n"
                                         "2,0,1,collective,AllReduce,dp,4096,1,1,2\n"
                                         "2,1,1,collective,AllReduce,dp,4096,1,0.5,2\n"),
                                   topo);
  const Event& ar = dag.event(2);
  CHECK(ar.ranks == std::vector<RankId>{0, 1});
  CHECK(ar.bytes == 4096);
  CHECK(ar.observed.size() == 2);
  CHECK(validate_dag(dag).empty());
}

TEST_CASE("parse errors carry the line number") {
  const Topology topo(spec(2, 1));
  const auto unknown_group = message_of([&] {
    parse_trace(trace("1,0,1,collective,AllReduce,tp9,10,,,\n"), topo);
  });
  CHECK(unknown_group.find("line 4") != std::string::npos);
  CHECK(unknown_group.find("tp9") != std::string::npos);
  CHECK(error_of([&] { parse_trace(trace("1,0,0,compute,,,0,,1\n"), topo); }) == ErrorCode::ParseError);
  CHECK(error_of([&] { parse_trace(trace("x,0,0,compute,,,0,,,\n"), topo); }) == ErrorCode::ParseError);
  CHECK(error_of([&] { parse_trace(trace("1,0,0,compute,,,0,9,,\n"), topo); }) == ErrorCode::ParseError);
  CHECK(error_of([&] { parse_trace(trace("1,0,0,compute,,,0,,2,1\n"), topo); }) == ErrorCode::ParseError);
  CHECK(error_of([&] { parse_trace("1,0,0,compute,,,0,,,\n", topo); }) == ErrorCode::ParseError);
  CHECK(error_of([&] {
          parse_trace(trace("1,0,0,compute,,,0,2,,\n2,0,1,compute,,,0,1,,\n"), topo);
        }) == ErrorCode::CyclicDependency);
  CHECK(error_of([&] { load_trace("/nonexistent/trace.csv", topo); }) == ErrorCode::IoError);
}

TEST_CASE("generated traces round-trip and replay") {
  const Topology topo(spec(4, 4));
  auto p = params(2, 2, 4, 8, 2);
  p.jitter = 0.1;
  p.seed = 3;
  const EventDag dag = generate_3d_schedule(p, topo);
  const SimResult base = simulate(dag, topo, ControlPolicy{false, 1});
  const std::string text = write_trace(with_observed(dag, base));

  const EventDag parsed = parse_trace(text, topo);
  CHECK(write_trace(parsed) == text);
  CHECK(parsed.size() == dag.size());
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const Event& a = dag.events()[i];
    const Event& b = parsed.event(a.id);
    CHECK(a.deps == b.deps);
    if (!a.is_collective()) CHECK(b.duration == doctest::Approx(a.duration).epsilon(1e-12));
  }
  const SimResult replay = simulate(parsed, topo, ControlPolicy{false, 1});
  CHECK(std::abs(replay.makespan - base.makespan) <= 1e-9 * base.makespan);
}

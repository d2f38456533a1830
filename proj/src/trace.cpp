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

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "opus/error.hpp"
#include "opus/workload.hpp"

namespace opus {

namespace {

constexpr std::string_view kHeader =
    "event_id,rank,stream,kind,coll_kind,group_id,bytes,dep_ids,observed_start_s,observed_end_s";

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::ParseError, fmt::format("line {}: {}", line, msg));
}

template <typename T>
T parse_uint(const std::string& s, std::size_t line, const char* field) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(s, &used);
    if (used != s.size() || s.find('-') != std::string::npos) throw std::invalid_argument(s);
    return static_cast<T>(v);
  } catch (const std::exception&) {
    parse_fail(line, fmt::format("field {}: expected a non-negative integer, got '{}'", field, s));
  }
}

double parse_double(const std::string& s, std::size_t line, const char* field) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(line, fmt::format("field {}: expected a number, got '{}'", field, s));
  }
}

struct PendingEvent {
  Event event;
  std::size_t first_line = 0;
  std::set<RankId> seen_ranks;
};

}  // namespace

EventDag parse_trace(const std::string& text, const Topology& topo) {
  std::vector<CommGroup> groups;
  std::map<GroupId, std::size_t> group_index;
  std::map<EventId, PendingEvent> pending;
  std::vector<EventId> order;
  std::map<std::pair<RankId, std::uint32_t>, EventId> last_on_stream;
  std::vector<std::pair<EventId, std::size_t>> dep_lines;  // (dep id, line) for late checks
  bool header_seen = false;

  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.rfind("#group,", 0) == 0) {
      auto f = split(line, ',');
      if (f.size() != 4) parse_fail(line_no, "group directive needs: #group,<id>,<axis>,<members>");
      std::vector<RankId> members;
      for (const auto& m : split(f[3], ';')) {
        if (!m.empty()) members.push_back(parse_uint<RankId>(m, line_no, "members"));
      }
      try {
        CommGroup g = make_group(topo, f[1], parse_axis(f[2]), std::move(members), true);
        if (group_index.count(g.id)) parse_fail(line_no, fmt::format("duplicate group {}", g.id));
        group_index.emplace(g.id, groups.size());
        groups.push_back(std::move(g));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError && std::string(e.what()).rfind("line", 0) == 0) throw;
        parse_fail(line_no, e.what());
      }
      continue;
    }
    if (line.front() == '#') continue;
    if (!header_seen) {
      if (line != kHeader) parse_fail(line_no, fmt::format("expected header '{}'", kHeader));
      header_seen = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 10) parse_fail(line_no, fmt::format("expected 10 fields, got {}", f.size()));
    const auto id = parse_uint<EventId>(f[0], line_no, "event_id");
    const auto rank = parse_uint<RankId>(f[1], line_no, "rank");
    const auto stream = parse_uint<std::uint32_t>(f[2], line_no, "stream");
    if (rank >= topo.num_ranks()) parse_fail(line_no, fmt::format("rank {} out of range", rank));

    EventKind kind;
    if (f[3] == "compute") {
      kind = EventKind::Compute;
    } else if (f[3] == "collective") {
      kind = EventKind::Collective;
    } else {
      parse_fail(line_no, fmt::format("field kind: unknown value '{}'", f[3]));
    }
    CollKind coll = CollKind::None;
    try {
      coll = parse_coll_kind(f[4]);
    } catch (const Error& e) {
      parse_fail(line_no, e.what());
    }
    if ((kind == EventKind::Collective) != (coll != CollKind::None)) {
      parse_fail(line_no, "coll_kind must be set exactly for collective records");
    }
    if (kind == EventKind::Collective && !group_index.count(f[5])) {
      parse_fail(line_no, fmt::format("unknown group id '{}'", f[5]));
    }
    const auto bytes = f[6].empty() ? 0 : parse_uint<std::uint64_t>(f[6], line_no, "bytes");

    auto [it, fresh] = pending.try_emplace(id);
    PendingEvent& pe = it->second;
    if (fresh) {
      pe.first_line = line_no;
      pe.event.id = id;
      pe.event.kind = kind;
      pe.event.coll = coll;
      pe.event.group = kind == EventKind::Collective ? f[5] : "";
      pe.event.bytes = bytes;
      pe.event.stream = stream;
      order.push_back(id);
    } else if (pe.event.kind != kind || pe.event.coll != coll ||
               (kind == EventKind::Collective && pe.event.group != f[5]) ||
               pe.event.bytes != bytes || pe.event.stream != stream) {
      parse_fail(line_no, fmt::format("record disagrees with line {} for event {}", pe.first_line, id));
    }
    if (!pe.seen_ranks.insert(rank).second) {
      parse_fail(line_no, fmt::format("event {} lists rank {} twice", id, rank));
    }
    if (kind == EventKind::Compute && pe.seen_ranks.size() > 1) {
      parse_fail(line_no, fmt::format("compute event {} spans more than one rank", id));
    }
    pe.event.ranks.push_back(rank);
    for (const auto& d : split(f[7], ';')) {
      if (d.empty()) continue;
      pe.event.deps.push_back(parse_uint<EventId>(d, line_no, "dep_ids"));
      dep_lines.emplace_back(pe.event.deps.back(), line_no);
    }
    const bool has_start = !f[8].empty();
    const bool has_end = !f[9].empty();
    if (has_start != has_end) parse_fail(line_no, "observed start and end must be given together");
    if (has_start) {
      Observed o{rank, parse_double(f[8], line_no, "observed_start_s"),
                 parse_double(f[9], line_no, "observed_end_s")};
      if (o.end < o.start) parse_fail(line_no, "observed end precedes start");
      pe.event.observed.push_back(o);
    }
    // Records on the same (rank, stream) execute in file order.
    if (auto s = last_on_stream.find({rank, stream}); s != last_on_stream.end()) {
      if (s->second != id) pe.event.deps.push_back(s->second);
      s->second = id;
    } else {
      last_on_stream.emplace(std::make_pair(rank, stream), id);
    }
  }

  if (!header_seen && !pending.empty()) parse_fail(line_no, "missing header line");
  for (const auto& [dep, line] : dep_lines) {
    if (!pending.count(dep)) parse_fail(line, fmt::format("dependency on unknown event {}", dep));
  }

  std::vector<Event> events;
  events.reserve(order.size());
  for (EventId id : order) {
    Event e = std::move(pending.at(id).event);
    if (e.kind == EventKind::Compute && !e.observed.empty()) {
      e.duration = e.observed.front().end - e.observed.front().start;
    }
    events.push_back(std::move(e));
  }
  EventDag dag(std::move(groups), std::move(events));
  dag.topological_order();  // throws CyclicDependency
  return dag;
}

EventDag load_trace(const std::string& path, const Topology& topo) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open trace {}", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str(), topo);
}

std::string write_trace(const EventDag& dag) {
  std::string out = "# opus trace v1\n";
  for (const auto& g : dag.groups()) {
    out += fmt::format("#group,{},{},{}\n", g.id, to_string(g.axis), fmt::join(g.members, ";"));
  }
  out += kHeader;
  out += '\n';
  for (std::size_t idx : dag.topological_order()) {
    const Event& e = dag.events()[idx];
    const std::string deps = fmt::format("{}", fmt::join(e.deps, ";"));
    for (RankId r : e.ranks) {
      std::string start, end;
      for (const auto& o : e.observed) {
        if (o.rank == r) {
          start = fmt::format("{:.17g}", o.start);
          end = fmt::format("{:.17g}", o.end);
        }
      }
      out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", e.id, r, e.stream,
                         e.is_collective() ? "collective" : "compute", to_string(e.coll), e.group,
                         e.bytes, deps, start, end);
    }
  }
  return out;
}

}  // namespace opus

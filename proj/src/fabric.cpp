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

#include "opus/fabric.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "opus/error.hpp"

namespace opus {

double collective_time(CollKind kind, std::uint64_t bytes, std::size_t n, double bandwidth,
                       double alpha) {
  if (n == 0) throw Error(ErrorCode::InvalidParams, "collective group must not be empty");
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::InvalidParams, "bandwidth must be positive");
  if (n == 1) return 0.0;
  const double s = static_cast<double>(bytes);
  const double steps = static_cast<double>(n - 1);
  const double share = steps / static_cast<double>(n);
  switch (kind) {
    case CollKind::AllReduce:
      return 2.0 * share * s / bandwidth + 2.0 * steps * alpha;
    case CollKind::AllGather:
    case CollKind::ReduceScatter:
    case CollKind::AllToAll:
      return share * s / bandwidth + steps * alpha;
    case CollKind::SendRecv:
      return s / bandwidth + alpha;
    case CollKind::None:
      break;
  }
  throw Error(ErrorCode::InvalidParams, "event is not a collective");
}

std::string policy_name(const ControlPolicy& policy) {
  return policy.provisioning ? "provisioning" : "reactive";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<CollectiveTiming> timeline_from(const EventDag& dag, const Topology& topo,
                                            const std::vector<EventTiming>& times, RailId rail) {
  std::vector<CollectiveTiming> out;
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const Event& ev = dag.events()[i];
    if (!ev.is_collective()) continue;
    const CommGroup& g = dag.group(ev.group);
    if (!is_scale_out(g.axis)) continue;
    if (ev.ranks.empty() || topo.rank(ev.ranks.front()).rail() != rail) continue;
    out.push_back(CollectiveTiming{ev.id, ev.group, g.axis, ev.bytes, times[i].joins, times[i].end});
  }
  return out;
}

// One simulation run: every iteration over one topology and policy.
class Runner {
 public:
  Runner(const EventDag& dag, const Topology& topo, const ControlPolicy& policy)
      : dag_(dag), topo_(topo), policy_(policy), ocs_(topo.rail_switch().is_ocs()),
        delay_(topo.rail_switch().reconfig_delay) {
    prepare();
  }

  SimResult run();

 private:
  enum ItemType { kFinish = 0, kReady = 1 };
  struct Item {
    double time;
    int type;
    std::uint64_t seq;
    std::size_t index;
    bool operator>(const Item& o) const {
      return std::tie(time, type, seq) > std::tie(o.time, o.type, o.seq);
    }
  };
  struct Speculation {
    std::uint32_t iteration;
    std::size_t position;
    GroupId group;
  };

  void prepare();
  void run_iteration(std::uint32_t k, double t0);
  void push(double time, int type, std::size_t index) {
    queue_.push(Item{time, type, seq_++, index});
  }
  void start_compute(std::size_t i, double now);
  void join(std::size_t i, std::size_t j, double now);
  void start_collective(std::size_t i, double now);
  void finish(std::size_t i, double now);
  void control_step(double now);
  void speculate(RankId r, double now);
  void profile(const std::vector<EventTiming>& first);

  const EventDag& dag_;
  const Topology& topo_;
  ControlPolicy policy_;
  bool ocs_;
  double delay_;

  // Static, per event.
  std::vector<double> duration_;
  std::vector<bool> switched_;  // scale-out collective on an OCS rail
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> dependents_;  // (event, member or npos)
  std::vector<std::vector<std::size_t>> remaining_init_;

  // Profiled join order per rank.
  std::map<RankId, std::vector<GroupId>> group_seq_;
  std::map<std::pair<std::size_t, RankId>, std::size_t> position_;
  bool profiled_ = false;

  // Dynamic.
  std::optional<GroupTable> table_;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  std::set<double> ready_scheduled_;
  std::uint32_t iteration_ = 0;
  std::vector<std::vector<std::size_t>> remaining_;
  std::vector<std::size_t> joined_;
  std::vector<EventTiming> times_;
  std::vector<std::vector<PortId>> ports_;
  std::set<std::size_t> pending_;
  std::size_t unfinished_ = 0;
  std::map<RankId, int> inflight_;
  std::map<RankId, std::optional<std::size_t>> last_position_;
  std::map<RankId, Speculation> speculation_;

  SimResult result_;
};

void Runner::prepare() {
  const auto& events = dag_.events();
  const std::size_t n = events.size();
  duration_.assign(n, 0.0);
  switched_.assign(n, false);
  dependents_.assign(n, {});
  remaining_init_.assign(n, {});
  const double rail_bw = topo_.nic().total_bandwidth() / 8.0;

  for (std::size_t i = 0; i < n; ++i) {
    const Event& ev = events[i];
    if (!ev.is_collective()) {
      duration_[i] = ev.duration;
      remaining_init_[i] = {ev.deps.size()};
      for (EventId d : ev.deps) dependents_[dag_.index_of(d)].emplace_back(i, SIZE_MAX);
      continue;
    }
    const CommGroup& g = dag_.group(ev.group);
    const bool scale_out = is_scale_out(g.axis);
    if (scale_out && ocs_) {
      if (ev.coll == CollKind::AllToAll) {
        throw Error(ErrorCode::UnsupportedKind,
                    fmt::format("event {}: AllToAll cannot run on an OCS rail", ev.id));
      }
      ring_port_demand(g, topo_.ports_per_rail());
      switched_[i] = true;
    }
    duration_[i] = collective_time(ev.coll, ev.bytes, ev.ranks.size(),
                                   scale_out ? rail_bw : topo_.scaleup_bandwidth(), policy_.alpha);
    remaining_init_[i].assign(ev.ranks.size(), 0);
    for (EventId d : ev.deps) {
      const std::size_t di = dag_.index_of(d);
      const auto& dr = events[di].ranks;
      bool any = false;
      for (std::size_t j = 0; j < ev.ranks.size(); ++j) {
        if (std::binary_search(dr.begin(), dr.end(), ev.ranks[j])) {
          any = true;
          ++remaining_init_[i][j];
          dependents_[di].emplace_back(i, j);
        }
      }
      if (!any) {
        for (std::size_t j = 0; j < ev.ranks.size(); ++j) {
          ++remaining_init_[i][j];
          dependents_[di].emplace_back(i, j);
        }
      }
    }
  }
  if (ocs_) table_.emplace(topo_, dag_.groups());
}

void Runner::start_compute(std::size_t i, double now) {
  times_[i].start = now;
  push(now + duration_[i], kFinish, i);
}

void Runner::start_collective(std::size_t i, double now) {
  times_[i].start = now;
  if (switched_[i]) ports_[i] = table_->begin_transfer(dag_.events()[i].group);
  push(now + duration_[i], kFinish, i);
}

void Runner::join(std::size_t i, std::size_t j, double now) {
  const Event& ev = dag_.events()[i];
  const RankId r = ev.ranks[j];
  times_[i].joins[j] = {r, now};
  ++joined_[i];
  if (switched_[i]) {
    if (profiled_) {
      const std::size_t pos = position_.at({i, r});
      auto spec = speculation_.find(r);
      if (spec != speculation_.end()) {
        if (spec->second.group != ev.group) table_->cancel_speculation(r, ev.group);
        speculation_.erase(spec);
      }
      auto& last = last_position_[r];
      last = last ? std::max(*last, pos) : pos;
    }
    ++inflight_[r];
    if (shim_intercept(ev.group, r, now, *table_) == ShimAction::Request) {
      table_->submit(ReconfigRequest{ev.group, r, now, false});
    }
  }
  if (joined_[i] == ev.ranks.size()) {
    if (switched_[i]) {
      pending_.insert(i);
    } else {
      start_collective(i, now);
    }
  }
}

void Runner::speculate(RankId r, double now) {
  auto seq_it = group_seq_.find(r);
  auto last = last_position_.find(r);
  if (seq_it == group_seq_.end() || last == last_position_.end() || !last->second) return;
  const auto& seq = seq_it->second;
  const std::size_t pos = *last->second;
  std::uint32_t next_iteration = iteration_;
  std::size_t next_pos = pos + 1;
  if (next_pos == seq.size()) {
    next_iteration = iteration_ + 1;
    next_pos = 0;
    if (next_iteration >= policy_.iterations) return;
  }
  auto req = provision(seq, pos, seq[pos], r, now);
  if (!req) return;
  if (table_->installed(req->group, now) || table_->has_request(req->group, r)) return;
  table_->submit(*req);
  speculation_[r] = Speculation{next_iteration, next_pos, req->group};
}

void Runner::finish(std::size_t i, double now) {
  const Event& ev = dag_.events()[i];
  times_[i].end = now;
  --unfinished_;
  if (switched_[i]) {
    table_->end_transfer(ev.group, ports_[i], now);
    result_.transfers.push_back(TransferRecord{ev.id, iteration_, ev.group,
                                               topo_.rank(ev.ranks.front()).rail(), ports_[i],
                                               times_[i].start, now});
    for (RankId r : ev.ranks) {
      if (--inflight_[r] == 0 && profiled_ && policy_.provisioning) speculate(r, now);
    }
  }
  for (const auto& [e, j] : dependents_[i]) {
    if (--remaining_[e][j == SIZE_MAX ? 0 : j] != 0) continue;
    if (j == SIZE_MAX) {
      start_compute(e, now);
    } else {
      join(e, j, now);
    }
  }
}

void Runner::control_step(double now) {
  if (!table_) return;
  for (;;) {
    for (auto& entry : table_->apply(now, delay_)) result_.full_reconfig_log.push_back(std::move(entry));
    bool submitted = false;
    for (auto it = pending_.begin(); it != pending_.end();) {
      const std::size_t i = *it;
      const Event& ev = dag_.events()[i];
      if (table_->installed(ev.group, now)) {
        start_collective(i, now);
        it = pending_.erase(it);
        continue;
      }
      if (!table_->has_open_job(ev.group)) {
        // The ring was taken down after its members joined; ask again.
        for (RankId r : ev.ranks) {
          if (!table_->has_request(ev.group, r)) {
            table_->submit(ReconfigRequest{ev.group, r, now, false});
            submitted = true;
          }
        }
      }
      ++it;
    }
    if (!submitted) break;
  }
  if (auto t = table_->next_ready_time(now); t && ready_scheduled_.insert(*t).second) {
    push(*t, kReady, 0);
  }
}

void Runner::run_iteration(std::uint32_t k, double t0) {
  iteration_ = k;
  const auto& events = dag_.events();
  const std::size_t n = events.size();
  remaining_ = remaining_init_;
  joined_.assign(n, 0);
  times_.assign(n, EventTiming{});
  ports_.assign(n, {});
  pending_.clear();
  unfinished_ = n;
  last_position_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    times_[i].event = events[i].id;
    if (events[i].is_collective()) times_[i].joins.resize(events[i].ranks.size());
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!events[i].is_collective()) {
      if (remaining_[i][0] == 0) start_compute(i, t0);
      continue;
    }
    for (std::size_t j = 0; j < events[i].ranks.size(); ++j) {
      if (remaining_[i][j] == 0) join(i, j, t0);
    }
  }
  control_step(t0);

  while (unfinished_ > 0) {
    if (queue_.empty()) {
      throw Error(ErrorCode::ConflictDeadlock,
                  fmt::format("iteration {}: {} events cannot start;{}", k, unfinished_,
                              table_ ? table_->describe_blocked() : std::string()));
    }
    const Item item = queue_.top();
    queue_.pop();
    if (item.type == kFinish) finish(item.index, item.time);
    control_step(item.time);
  }
}

void Runner::profile(const std::vector<EventTiming>& first) {
  std::map<RankId, std::vector<std::pair<double, std::size_t>>> order;
  for (std::size_t i = 0; i < dag_.size(); ++i) {
    if (!switched_[i]) continue;
    for (const auto& [r, t] : first[i].joins) order[r].emplace_back(t, i);
  }
  for (auto& [r, list] : order) {
    std::sort(list.begin(), list.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return dag_.events()[a.second].id < dag_.events()[b.second].id;
    });
    auto& seq = group_seq_[r];
    for (std::size_t p = 0; p < list.size(); ++p) {
      position_[{list[p].second, r}] = p;
      seq.push_back(dag_.events()[list[p].second].group);
    }
  }
  // Every switch of a rank into a group may cost that group one
  // reconfiguration; members of a group switch into it together.
  std::map<GroupId, std::map<RankId, std::size_t>> entries;
  for (const auto& [r, seq] : group_seq_) {
    std::vector<GroupId> ringed;
    for (const auto& g : seq) {
      if (dag_.group(g).size() > 1) ringed.push_back(g);
    }
    for (std::size_t p = 0; p < ringed.size(); ++p) {
      if (ringed[p] != ringed[(p + ringed.size() - 1) % ringed.size()]) ++entries[ringed[p]][r];
    }
  }
  for (const auto& [g, per_rank] : entries) {
    std::size_t most = 0;
    for (const auto& [r, n] : per_rank) most = std::max(most, n);
    result_.profiled_transitions += most;
  }
  profiled_ = true;
}

SimResult Runner::run() {
  const std::uint32_t iterations = std::max<std::uint32_t>(1, policy_.iterations);
  double t0 = 0.0;
  for (std::uint32_t k = 0; k < iterations; ++k) {
    result_.iteration_starts.push_back(t0);
    run_iteration(k, t0);
    double end = t0;
    for (const auto& t : times_) end = std::max(end, t.end);
    if (k == 0 && table_) profile(times_);
    if (k + 1 < iterations) t0 = end;
  }

  for (auto& t : times_) {
    t.start -= t0;
    t.end -= t0;
    for (auto& jn : t.joins) jn.second -= t0;
    result_.makespan = std::max(result_.makespan, t.end);
  }
  result_.event_times = times_;
  for (const auto& entry : result_.full_reconfig_log) {
    if (entry.time < t0) continue;
    auto rel = entry;
    rel.time -= t0;
    result_.reconfig_log.push_back(std::move(rel));
  }
  if (table_) result_.circuits = table_->circuit_log_snapshot(t0 + result_.makespan);
  return result_;
}

Topology with_switch(const Topology& topo, RailSwitch sw) {
  TopologySpec spec = topo.spec();
  spec.rail_switch = sw;
  return Topology(spec);
}

}  // namespace

SimResult simulate(const EventDag& dag, const Topology& topo, const ControlPolicy& policy) {
  SimResult result = Runner(dag, topo, policy).run();
  result.baseline_makespan = result.makespan;
  if (topo.rail_switch().is_ocs()) {
    const Topology electrical = with_switch(topo, RailSwitch{});
    result.baseline_makespan = Runner(dag, electrical, policy).run().makespan;
  }
  result.overhead =
      result.baseline_makespan > 0.0 ? result.makespan / result.baseline_makespan : 1.0;
  return result;
}

std::vector<CollectiveTiming> rail_timeline(const EventDag& dag, const Topology& topo,
                                            const SimResult& result, RailId rail) {
  return timeline_from(dag, topo, result.event_times, rail);
}

EventDag with_observed(const EventDag& dag, const SimResult& result) {
  std::vector<Event> events = dag.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    Event& ev = events[i];
    const EventTiming& t = result.event_times[i];
    ev.observed.clear();
    if (ev.is_collective()) {
      for (const auto& [r, join] : t.joins) ev.observed.push_back(Observed{r, join, t.end});
    } else {
      for (RankId r : ev.ranks) ev.observed.push_back(Observed{r, t.start, t.end});
    }
  }
  return EventDag(dag.groups(), std::move(events));
}

std::vector<SweepRow> sweep_delay(const EventDag& dag, const Topology& topo,
                                  const std::vector<double>& delays,
                                  const std::vector<ControlPolicy>& policies, unsigned jobs) {
  for (double d : delays) {
    if (!(d >= 0.0)) throw Error(ErrorCode::InvalidParams, "reconfiguration delays must be >= 0");
  }
  const Topology electrical = with_switch(topo, RailSwitch{});
  const std::uint32_t radix =
      topo.rail_switch().is_ocs() ? topo.rail_switch().radix : topo.rail_port_demand();

  struct Point {
    double delay;
    ControlPolicy policy;
  };
  std::vector<Point> points;
  for (double d : delays) {
    for (const auto& p : policies) points.push_back(Point{d, p});
  }
  std::vector<SweepRow> rows(points.size());
  auto run_point = [&](std::size_t idx, double baseline) {
    const Topology ocs = with_switch(topo, RailSwitch{SwitchKind::Ocs, points[idx].delay, radix});
    const double makespan = Runner(dag, ocs, points[idx].policy).run().makespan;
    rows[idx] = SweepRow{points[idx].delay, policy_name(points[idx].policy), makespan,
                         baseline > 0.0 ? makespan / baseline : 1.0};
  };

  std::map<std::uint32_t, double> baselines;  // by iteration count
  for (const auto& p : policies) {
    if (!baselines.count(p.iterations)) {
      baselines[p.iterations] = Runner(dag, electrical, p).run().makespan;
    }
  }
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, points.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run_point(i, baselines[points[i].policy.iterations]);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  for (unsigned w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < points.size(); i = next++) {
        run_point(i, baselines.at(points[i].policy.iterations));
      }
    }));
  }
  for (auto& f : futures) f.get();
  return rows;
}

std::vector<std::string> audit_port_sharing(const SimResult& result) {
  std::map<PortId, std::vector<std::pair<double, double>>> by_port;
  for (const auto& c : result.circuits) {
    by_port[c.circuit.port_a].emplace_back(c.circuit.setup_start, c.down_at);
    by_port[c.circuit.port_b].emplace_back(c.circuit.setup_start, c.down_at);
  }
  std::vector<std::string> out;
  for (auto& [port, spans] : by_port) {
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].first < spans[i - 1].second) {
        out.push_back(fmt::format("port {} holds two circuits at t={}", port, spans[i].first));
      }
    }
  }
  return out;
}

std::vector<std::string> audit_reconfig_vs_transfer(const SimResult& result) {
  std::map<PortId, std::vector<const TransferRecord*>> by_port;
  for (const auto& t : result.transfers) {
    for (PortId p : t.ports) by_port[p].push_back(&t);
  }
  std::vector<std::string> out;
  for (const auto& r : result.full_reconfig_log) {
    const double lo = r.time;
    const double hi = r.time + r.delay;
    std::vector<PortId> affected = r.ports;
    affected.insert(affected.end(), r.released.begin(), r.released.end());
    for (PortId p : affected) {
      auto it = by_port.find(p);
      if (it == by_port.end()) continue;
      for (const TransferRecord* t : it->second) {
        if (t->start < hi && lo < t->end) {
          out.push_back(fmt::format("reconfiguration of {} at t={} overlaps transfer of event {} on port {}",
                                    r.group, r.time, t->event, p));
        }
      }
    }
  }
  return out;
}

std::vector<std::string> audit_degree(const SimResult& result, std::uint32_t ports_per_rank) {
  std::map<RankId, std::vector<std::pair<double, int>>> edges;
  for (const auto& c : result.circuits) {
    for (RankId r : {c.circuit.rank_a, c.circuit.rank_b}) {
      edges[r].emplace_back(c.circuit.setup_start, +1);
      edges[r].emplace_back(c.down_at, -1);
    }
  }
  std::vector<std::string> out;
  for (auto& [rank, list] : edges) {
    std::sort(list.begin(), list.end());  // closings sort before openings at equal times
    int live = 0;
    for (const auto& [t, delta] : list) {
      live += delta;
      if (live > static_cast<int>(ports_per_rank)) {
        out.push_back(fmt::format("rank {} holds {} circuits at t={}", rank, live, t));
      }
    }
  }
  return out;
}

}  // namespace opus

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

#include "opus/control.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "opus/error.hpp"

namespace opus {

std::uint32_t ring_port_demand(const CommGroup& group, std::uint32_t nic_ports, std::uint32_t sharing) {
  const std::size_t n = group.size();
  if (n <= 1) return 0;
  if (n == 2) return std::clamp<std::uint32_t>(nic_ports / std::max<std::uint32_t>(sharing, 1), 1, 2);
  if (nic_ports < 2) {
    throw Error(ErrorCode::DegreeInfeasible,
                fmt::format("group {} needs a ring of {} ranks but each NIC has only {} port(s)",
                            group.id, n, nic_ports));
  }
  return 2;
}

CircuitConfig ring_config(const CommGroup& group, std::uint32_t nic_ports, std::uint32_t sharing) {
  CircuitConfig cfg{group.id, {}, ring_port_demand(group, nic_ports, sharing)};
  const auto& m = group.members;
  if (m.size() == 2) {
    for (std::uint32_t i = 0; i < cfg.ports_per_member; ++i) cfg.links.emplace_back(m[0], m[1]);
  } else if (m.size() > 2) {
    for (std::size_t i = 0; i < m.size(); ++i) cfg.links.emplace_back(m[i], m[(i + 1) % m.size()]);
  }
  return cfg;
}

std::uint32_t pair_sharing(const CommGroup& group, const std::vector<CommGroup>& groups) {
  if (group.size() != 2) return 1;
  std::uint32_t most = 1;
  for (RankId m : group.members) {
    std::uint32_t n = 0;
    for (const auto& g : groups) {
      if (g.size() == 2 && axis_class(g.axis) == axis_class(group.axis) && g.contains(m)) ++n;
    }
    most = std::max(most, n);
  }
  return most;
}

ProfiledSchedule profile_iteration(const std::map<RailId, std::vector<CollectiveTiming>>& timelines) {
  ProfiledSchedule out;
  for (const auto& [rail, timeline] : timelines) {
    auto& transitions = out.rails[rail];
    for (const auto& phase : segment_phases(timeline)) {
      transitions.push_back(PhaseTransition{phase.groups, phase.events.front()});
    }
    std::map<RankId, std::vector<std::tuple<double, EventId, GroupId>>> joins;
    for (const auto& c : timeline) {
      if (!is_scale_out(c.axis)) continue;
      for (const auto& [rank, start] : c.rank_starts) joins[rank].emplace_back(start, c.event, c.group);
    }
    for (auto& [rank, list] : joins) {
      std::sort(list.begin(), list.end());
      auto& seq = out.rank_sequence[rank];
      for (const auto& j : list) seq.push_back(std::get<2>(j));
    }
  }
  return out;
}

std::optional<ReconfigRequest> provision(std::span<const GroupId> rank_sequence,
                                         std::size_t completed_index,
                                         const GroupId& completed_group, RankId rank, double now) {
  if (rank_sequence.empty()) return std::nullopt;
  const GroupId& next = rank_sequence[(completed_index + 1) % rank_sequence.size()];
  if (next == completed_group) return std::nullopt;
  return ReconfigRequest{next, rank, now, true};
}

GroupTable::GroupTable(const Topology& topo, const std::vector<CommGroup>& groups)
    : topo_(topo), ports_per_rank_(topo.ports_per_rail()) {
  for (const auto& g : groups) {
    groups_.emplace(g.id, g);
    sharing_.emplace(g.id, pair_sharing(g, groups));
  }
}

const CommGroup& GroupTable::group(const GroupId& id) const {
  auto it = groups_.find(id);
  if (it == groups_.end()) throw Error(ErrorCode::InvalidParams, fmt::format("unknown group {}", id));
  return it->second;
}

const CircuitConfig& GroupTable::config(const GroupId& id) {
  auto it = configs_.find(id);
  if (it == configs_.end()) it = configs_.emplace(id, ring_config(group(id), ports_per_rank_, sharing_.at(id))).first;
  return it->second;
}

bool GroupTable::installed(const GroupId& id, double now) const {
  const CommGroup& g = group(id);
  if (g.size() <= 1) return true;
  auto cfg = configs_.find(id);
  if (cfg == configs_.end()) return false;
  std::size_t up = 0;
  for (const auto& c : circuits_) {
    if (c.group == id && c.up_since <= now) ++up;
  }
  return up == cfg->second.links.size();
}

bool GroupTable::has_request(const GroupId& id, RankId rank) const {
  auto it = requests_.find(id);
  return it != requests_.end() && it->second.count(rank);
}

bool GroupTable::has_open_job(const GroupId& id) const {
  return std::any_of(jobs_.begin(), jobs_.end(), [&](const Job& j) {
    return j.group == id && (j.state == Job::State::Queued || j.state == Job::State::Switching);
  });
}

void GroupTable::submit(const ReconfigRequest& request) {
  const CommGroup& g = group(request.group);
  config(request.group);
  if (has_open_job(request.group)) return;
  auto& pending = requests_[request.group];
  pending.try_emplace(request.issuer, request);
  if (pending.size() < g.size()) return;

  Job job;
  job.seq = next_seq_++;
  job.group = request.group;
  for (const auto& [rank, r] : pending) {
    job.created = std::max(job.created, r.issue_time);
    job.speculative = job.speculative || r.speculative;
  }
  requests_.erase(request.group);
  jobs_.push_back(std::move(job));
}

void GroupTable::cancel_speculation(RankId rank, const GroupId& actual) {
  for (auto it = requests_.begin(); it != requests_.end();) {
    if (it->first != actual) {
      auto r = it->second.find(rank);
      if (r != it->second.end() && r->second.speculative) it->second.erase(r);
    }
    it = it->second.empty() ? requests_.erase(it) : std::next(it);
  }
  for (auto& job : jobs_) {
    if (job.group == actual || !job.speculative || job.state == Job::State::Done) continue;
    if (!group(job.group).contains(rank)) continue;
    // A speculative configuration the rank is not going to use: drop it if it
    // has not been applied, otherwise let later requests tear it down.
    if (job.state == Job::State::Queued || job.state == Job::State::AwaitingTraffic) {
      job.state = Job::State::Done;
    }
  }
}

GroupTable::Plan GroupTable::plan(const GroupId& id) const {
  const CircuitConfig& cfg = configs_.at(id);
  Plan p;

  auto key = [](RankId a, RankId b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
  std::map<std::pair<RankId, RankId>, int> existing;
  for (const auto& c : circuits_) {
    if (c.group == id) ++existing[key(c.rank_a, c.rank_b)];
  }
  std::vector<std::pair<RankId, RankId>> needed;
  for (const auto& [a, b] : cfg.links) {
    auto it = existing.find(key(a, b));
    if (it != existing.end() && it->second > 0) {
      --it->second;
    } else {
      needed.emplace_back(a, b);
    }
  }
  if (needed.empty()) return p;

  std::map<RankId, std::uint32_t> need;
  for (const auto& [a, b] : needed) {
    ++need[a];
    ++need[b];
  }
  std::set<std::size_t> evicted;
  auto port_used = [&](PortId port) {
    for (std::size_t i = 0; i < circuits_.size(); ++i) {
      if (evicted.count(i)) continue;
      if (circuits_[i].port_a == port || circuits_[i].port_b == port) return true;
    }
    return false;
  };
  auto free_ports = [&](RankId r) {
    std::vector<PortId> out;
    for (std::uint32_t k = 0; k < ports_per_rank_; ++k) {
      const PortId port = r * ports_per_rank_ + k;
      if (!port_used(port)) out.push_back(port);
    }
    return out;
  };

  for (const auto& [rank, count] : need) {
    if (free_ports(rank).size() >= count) continue;
    // Evict whole rings of other groups at this rank, least recently set up first.
    std::map<GroupId, double> victims;
    for (std::size_t i = 0; i < circuits_.size(); ++i) {
      const auto& c = circuits_[i];
      if (evicted.count(i) || c.group == id || (c.rank_a != rank && c.rank_b != rank)) continue;
      auto [it, fresh] = victims.try_emplace(c.group, c.up_since);
      if (!fresh) it->second = std::min(it->second, c.up_since);
    }
    std::vector<std::pair<double, GroupId>> order;
    for (const auto& [g, t] : victims) order.emplace_back(t, g);
    std::sort(order.begin(), order.end());
    for (const auto& [t, g] : order) {
      if (free_ports(rank).size() >= count) break;
      for (std::size_t i = 0; i < circuits_.size(); ++i) {
        const auto& c = circuits_[i];
        if (c.group == g && (c.rank_a == rank || c.rank_b == rank)) evicted.insert(i);
      }
    }
  }

  std::map<RankId, std::vector<PortId>> free;
  for (const auto& [rank, count] : need) free[rank] = free_ports(rank);
  for (const auto& [a, b] : needed) {
    auto& fa = free[a];
    auto& fb = free[b];
    if (fa.empty() || fb.empty()) {
      throw Error(ErrorCode::DegreeInfeasible,
                  fmt::format("not enough NIC ports to build the ring of group {}", id));
    }
    p.new_ports.emplace_back(fa.front(), fb.front());
    p.new_ranks.emplace_back(a, b);
    fa.erase(fa.begin());
    fb.erase(fb.begin());
  }
  p.evict.assign(evicted.begin(), evicted.end());

  std::set<PortId> programmed;
  for (const auto& [pa, pb] : p.new_ports) {
    programmed.insert(pa);
    programmed.insert(pb);
  }
  std::set<PortId> released;
  for (std::size_t i : p.evict) {
    for (PortId port : {circuits_[i].port_a, circuits_[i].port_b}) {
      if (!programmed.count(port)) released.insert(port);
    }
  }
  p.touched_ports.assign(programmed.begin(), programmed.end());
  p.released_ports.assign(released.begin(), released.end());
  return p;
}

bool GroupTable::blocked_by_earlier(const Job& job, const std::vector<PortId>& touched) const {
  for (const auto& other : jobs_) {
    if (other.seq >= job.seq) break;
    if (other.state == Job::State::Done) continue;
    if (other.state == Job::State::Queued) {
      // Not planned yet: it may program any port of its members.
      for (PortId port : touched) {
        if (group(other.group).contains(port / ports_per_rank_)) return true;
      }
      continue;
    }
    for (PortId port : touched) {
      if (other.touched_ports.count(port)) return true;
    }
  }
  return false;
}

void GroupTable::remove_circuit(std::size_t idx, double now) {
  circuit_log_[circuit_log_index_[idx]].down_at = now;
  circuits_.erase(circuits_.begin() + static_cast<std::ptrdiff_t>(idx));
  circuit_log_index_.erase(circuit_log_index_.begin() + static_cast<std::ptrdiff_t>(idx));
}

std::vector<ReconfigLogEntry> GroupTable::apply(double now, double delay) {
  std::vector<ReconfigLogEntry> out;
  for (auto& job : jobs_) {
    if ((job.state == Job::State::Switching) && job.ready_at <= now) {
      job.state = Job::State::AwaitingTraffic;
    }
  }
  for (auto& job : jobs_) {
    if (job.state != Job::State::Queued) continue;
    if (installed(job.group, now)) {
      job.state = Job::State::Done;
      continue;
    }
    Plan p = plan(job.group);
    if (blocked_by_earlier(job, p.touched_ports)) continue;
    bool port_free = true;
    std::vector<PortId> affected = p.touched_ports;
    affected.insert(affected.end(), p.released_ports.begin(), p.released_ports.end());
    for (PortId port : affected) {
      if (auto b = busy_.find(port); b != busy_.end() && b->second > 0) port_free = false;
      for (const auto& c : circuits_) {
        if ((c.port_a == port || c.port_b == port) && c.up_since > now) port_free = false;
      }
    }
    if (!port_free) continue;

    std::vector<std::size_t> evict = p.evict;
    std::sort(evict.rbegin(), evict.rend());
    for (std::size_t idx : evict) remove_circuit(idx, now);
    for (std::size_t i = 0; i < p.new_ports.size(); ++i) {
      Circuit c{p.new_ports[i].first, p.new_ports[i].second, p.new_ranks[i].first,
                p.new_ranks[i].second, job.group, now, now + delay};
      circuit_log_index_.push_back(circuit_log_.size());
      circuit_log_.push_back(CircuitInterval{rail_of(c.rank_a), c,
                                             std::numeric_limits<double>::infinity()});
      circuits_.push_back(std::move(c));
    }
    job.state = delay > 0.0 ? Job::State::Switching : Job::State::AwaitingTraffic;
    job.ready_at = now + delay;
    job.touched_ports = std::set<PortId>(p.touched_ports.begin(), p.touched_ports.end());
    out.push_back(ReconfigLogEntry{now, rail_of(group(job.group).members.front()), job.group,
                                   job.speculative, delay, p.touched_ports, p.released_ports});
  }
  std::erase_if(jobs_, [](const Job& j) { return j.state == Job::State::Done; });
  return out;
}

std::optional<double> GroupTable::next_ready_time(double now) const {
  std::optional<double> best;
  for (const auto& c : circuits_) {
    if (c.up_since > now && (!best || c.up_since < *best)) best = c.up_since;
  }
  return best;
}

std::vector<PortId> GroupTable::begin_transfer(const GroupId& id) {
  std::vector<PortId> ports;
  for (const auto& c : circuits_) {
    if (c.group != id) continue;
    ports.push_back(c.port_a);
    ports.push_back(c.port_b);
  }
  std::sort(ports.begin(), ports.end());
  for (PortId p : ports) ++busy_[p];
  return ports;
}

void GroupTable::end_transfer(const GroupId& id, const std::vector<PortId>& ports, double now) {
  for (PortId p : ports) {
    auto it = busy_.find(p);
    if (it != busy_.end() && --it->second == 0) busy_.erase(it);
  }
  for (auto& job : jobs_) {
    if (job.group == id && job.state != Job::State::Queued && job.ready_at <= now) {
      job.state = Job::State::Done;
    }
  }
  std::erase_if(jobs_, [](const Job& j) { return j.state == Job::State::Done; });
}

bool GroupTable::idle() const {
  return std::none_of(jobs_.begin(), jobs_.end(),
                      [](const Job& j) { return j.state == Job::State::Queued; });
}

std::string GroupTable::describe_blocked() const {
  std::string out;
  for (const auto& j : jobs_) {
    if (j.state == Job::State::Queued) out += fmt::format(" queued:{}", j.group);
  }
  for (const auto& [g, reqs] : requests_) {
    out += fmt::format(" partial:{}({}/{})", g, reqs.size(), group(g).size());
  }
  return out;
}

std::vector<CircuitInterval> GroupTable::circuit_log_snapshot(double now) const {
  auto out = circuit_log_;
  for (auto& c : out) {
    if (c.down_at == std::numeric_limits<double>::infinity()) c.down_at = std::max(now, c.circuit.up_since);
  }
  return out;
}

ShimAction shim_intercept(const GroupId& group, RankId rank, double now, const GroupTable& table) {
  if (table.installed(group, now)) return ShimAction::Serve;
  if (table.has_request(group, rank) || table.has_open_job(group)) return ShimAction::Wait;
  return ShimAction::Request;
}

}  // namespace opus

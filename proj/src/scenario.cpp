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

#include "opus/scenario.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "opus/error.hpp"

namespace opus {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, fmt::format("field {}: {}", field, what));
}

// Typed access to one JSON object that reports unknown keys by full path.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
  }
  ~Section() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) bad(field(key), "expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) bad(field(key), "expected an integer");
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          bad(field(key), "must be >= 0");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) bad(field(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) bad(field(key), "expected a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      bad(field(key), e.what());
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(obj_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) bad(field(k), "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

SwitchKind parse_switch_kind(const std::string& text, const std::string& field) {
  if (text == "electrical") return SwitchKind::Electrical;
  if (text == "ocs") return SwitchKind::Ocs;
  bad(field, fmt::format("unknown switch kind '{}' (electrical or ocs)", text));
}

TopologySpec read_topology(Section s) {
  TopologySpec t;
  s.get("num_domains", t.num_domains);
  s.get("gpus_per_domain", t.gpus_per_domain);
  s.get("scaleup_bandwidth", t.scaleup_bandwidth);
  if (s.has("nic")) {
    Section n = s.child("nic");
    std::uint32_t ports = t.nic.ports;
    n.get("ports", ports);
    if (n.has("total_bandwidth")) {
      double total = 0.0;
      n.get("total_bandwidth", total);
      t.nic = NicPortConfig::split(total, ports);
    } else {
      t.nic.ports = ports;
      n.get("per_port_bandwidth", t.nic.per_port_bandwidth);
    }
    n.finish();
  }
  if (s.has("rail_switch")) {
    Section r = s.child("rail_switch");
    std::string kind = "electrical";
    r.get("kind", kind);
    t.rail_switch.kind = parse_switch_kind(kind, r.field("kind"));
    r.get("reconfig_delay", t.rail_switch.reconfig_delay);
    r.get("radix", t.rail_switch.radix);
    r.finish();
  }
  s.finish();
  return t;
}

WorkloadParams read_workload(Section s) {
  WorkloadParams w;
  s.get("pp", w.pp);
  s.get("dp", w.dp);
  s.get("tp", w.tp);
  s.get("n_layer", w.n_layer);
  s.get("n_microbatch", w.n_microbatch);
  s.get("bytes_per_layer_param", w.bytes_per_layer_param);
  s.get("bytes_per_layer_grad", w.bytes_per_layer_grad);
  s.get("bytes_activation", w.bytes_activation);
  s.get("bytes_sync_allreduce", w.bytes_sync_allreduce);
  s.get("jitter", w.jitter);
  if (s.has("compute")) {
    Section c = s.child("compute");
    c.get("forward_per_layer", w.compute.forward_per_layer);
    c.get("backward_per_layer", w.compute.backward_per_layer);
    c.get("grad_update", w.compute.grad_update);
    c.get("norm_compute", w.compute.norm_compute);
    c.get("sync_gap", w.compute.sync_gap);
    c.get("optimizer_step", w.compute.optimizer_step);
    c.finish();
  }
  s.finish();
  return w;
}

void read_control(Section s, Scenario& out) {
  s.get("provisioning", out.control.provisioning);
  s.get("iterations", out.control.iterations);
  s.get("alpha", out.control.alpha);
  s.get("delays", out.delays);
  if (out.control.iterations == 0) bad(s.field("iterations"), "must be at least 1");
  if (out.control.alpha < 0.0) bad(s.field("alpha"), "must be >= 0");
  for (double d : out.delays) {
    if (!(d >= 0.0)) bad(s.field("delays"), "delays must be >= 0");
  }
  s.finish();
}

EconConfig read_econ(Section s) {
  EconConfig e;
  s.get("switch_cost", e.switch_cost);
  s.get("switch_power", e.switch_power);
  s.get("switch_radix", e.switch_radix);
  s.get("transceiver_cost", e.transceiver_cost);
  s.get("transceiver_power", e.transceiver_power);
  s.get("ocs_port_cost", e.ocs_port_cost);
  s.get("ocs_chassis_power", e.ocs_chassis_power);
  s.get("ocs_radix", e.ocs_radix);
  s.get("electrical_ports_per_gpu", e.electrical_ports_per_gpu);
  s.get("ocs_ports_per_transceiver", e.ocs_ports_per_transceiver);
  s.finish();
  e.validate();
  return e;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::InvalidConfig,
                fmt::format("override '{}' is not of the form key.path=value", assignment));
  }
  std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  std::string pointer = "/" + key;
  for (auto& c : pointer) {
    if (c == '.') c = '/';
  }
  try {
    doc[json::json_pointer(pointer)] = value;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, fmt::format("override '{}': {}", assignment, e.what()));
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::vector<std::string>& overrides,
                        const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, fmt::format("scenario is not valid JSON: {}", e.what()));
  }
  for (const auto& o : overrides) apply_override(doc, o);

  Scenario out;
  Section root(doc, "");
  root.get("seed", out.seed);
  if (root.has("topology")) out.topology = read_topology(root.child("topology"));
  if (root.has("workload")) out.workload = read_workload(root.child("workload"));
  if (root.has("trace")) {
    std::string path;
    root.get("trace", path);
    std::filesystem::path p(path);
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    out.trace_path = p.string();
  }
  if (root.has("control")) read_control(root.child("control"), out);
  if (root.has("econ")) out.econ = read_econ(root.child("econ"));
  root.finish();

  if (out.workload && out.trace_path) bad("workload", "give either a workload or a trace, not both");
  if (out.workload) out.workload->seed = out.seed;
  return out;
}

Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, fmt::format("cannot read scenario {}", path));
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str(), overrides, std::filesystem::path(path).parent_path().string());
}

void apply_seed_env(Scenario& scenario) {
  const char* env = std::getenv("OPUS_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw Error(ErrorCode::InvalidConfig, fmt::format("OPUS_SEED '{}' is not an integer", env));
  scenario.seed = v;
  if (scenario.workload) scenario.workload->seed = v;
}

EventDag scenario_dag(const Scenario& scenario, const Topology& topo) {
  if (scenario.workload) return generate_3d_schedule(*scenario.workload, topo);
  if (scenario.trace_path) return load_trace(*scenario.trace_path, topo);
  throw Error(ErrorCode::InvalidConfig, "scenario has neither a workload nor a trace");
}

}  // namespace opus

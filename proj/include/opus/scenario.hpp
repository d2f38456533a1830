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

// Scenario files: topology, workload or trace, control policy and econ
// values in one JSON document (comments allowed).

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "opus/econ.hpp"
#include "opus/fabric.hpp"
#include "opus/model.hpp"
#include "opus/workload.hpp"

namespace opus {

struct Scenario {
  TopologySpec topology;
  std::optional<WorkloadParams> workload;
  std::optional<std::string> trace_path;  // resolved against the scenario's directory
  ControlPolicy control;
  std::vector<double> delays;  // seconds, for sweeps
  EconConfig econ;
  std::uint64_t seed = 0;
};

/// Parses a scenario document after applying `key.path=value` overrides.
/// Override values are read as JSON when they parse, else as strings.
/// Throws InvalidConfig with the offending field on malformed input.
Scenario parse_scenario(const std::string& text, const std::vector<std::string>& overrides = {},
                        const std::string& base_dir = "");

/// Reads and parses a scenario file; throws IoError if it cannot be read.
Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {});

/// Replaces the seed with OPUS_SEED when that variable is set.
void apply_seed_env(Scenario& scenario);

/// Builds the scenario's event DAG: generated from the workload or loaded
/// from the trace.
EventDag scenario_dag(const Scenario& scenario, const Topology& topo);

}  // namespace opus

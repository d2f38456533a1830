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

// Shared fixtures for the unit tests.

#pragma once

#include <string>

#include "doctest.h"
#include "opus/error.hpp"
#include "opus/model.hpp"
#include "opus/workload.hpp"

namespace opus::testing {

inline TopologySpec spec(std::uint32_t domains, std::uint32_t gpus, std::uint32_t ports = 2,
                         bool ocs = false, double delay = 0.0, std::uint32_t radix = 576) {
  TopologySpec s;
  s.num_domains = domains;
  s.gpus_per_domain = gpus;
  s.nic = NicPortConfig::split(400e9, ports);
  if (ocs) s.rail_switch = RailSwitch{SwitchKind::Ocs, delay, radix};
  return s;
}

inline WorkloadParams params(std::uint32_t pp, std::uint32_t dp, std::uint32_t tp,
                             std::uint32_t n_layer, std::uint32_t mb) {
  WorkloadParams p;
  p.pp = pp;
  p.dp = dp;
  p.tp = tp;
  p.n_layer = n_layer;
  p.n_microbatch = mb;
  p.bytes_per_layer_param = 64'000'000;
  p.bytes_per_layer_grad = 128'000'000;
  p.bytes_activation = 16'000'000;
  p.bytes_sync_allreduce = 4096;
  return p;
}

template <typename Fn>
ErrorCode error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

inline std::string source_path(const std::string& rel) { return std::string(OPUS_SOURCE_DIR) + "/" + rel; }

}  // namespace opus::testing

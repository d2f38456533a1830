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

// CSV and SVG renderings of simulation, window and econ results.

#pragma once

#include <string>
#include <vector>

#include "opus/econ.hpp"
#include "opus/fabric.hpp"
#include "opus/windows.hpp"

namespace opus {

std::string timeline_csv(const EventDag& dag, const SimResult& result);
std::string reconfig_csv(const std::vector<ReconfigLogEntry>& log);
std::string sweep_csv(const std::vector<SweepRow>& rows);
/// Overhead against delay, one polyline per policy.
std::string sweep_svg(const std::vector<SweepRow>& rows);
std::string windows_csv(const std::vector<Window>& windows);
std::string cdf_csv(const std::vector<CdfPoint>& points);
std::string bom_csv(const std::vector<Bom>& boms);
std::string table4_csv(const std::vector<ScalabilityRow>& rows);

/// Throws IoError when the file cannot be written.
void write_file(const std::string& path, const std::string& content);

}  // namespace opus

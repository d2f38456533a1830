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

#include <array>
#include <random>

#include "helpers.hpp"
#include "opus/econ.hpp"
#include "oracles.hpp"

using namespace opus;
using namespace opus::testing;

namespace {

EconConfig unit_config() {
  EconConfig c;
  c.switch_cost = 30000;
  c.switch_power = 2000;
  c.transceiver_cost = 800;
  c.transceiver_power = 12;
  c.ocs_port_cost = 500;
  c.ocs_chassis_power = 100;
  return c;
}

}  // namespace

TEST_CASE("single-tier electrical rails") {
  const Bom bom = electrical_fabric_bom(4, 4, unit_config());
  CHECK(bom.tiers == 1);
  CHECK(bom.count("switch") == 4);
  CHECK(bom.count("transceiver") == 32);
  CHECK(bom.total_cost == 4 * 30000.0 + 32 * 800.0);
  CHECK(bom.total_power == 4 * 2000.0 + 32 * 12.0);
}

TEST_CASE("optical rails with one port per GPU") {
  const Topology topo = build_topology(spec(4, 4, 1, true));
  const Bom bom = ocs_fabric_bom(topo, unit_config());
  CHECK(bom.count("ocs_port") == 16);
  CHECK(bom.count("transceiver") == 16);
  CHECK(bom.count("ocs_chassis") == 4);
  CHECK(bom.total_cost == 16 * 500.0 + 16 * 800.0);
  CHECK(bom.total_power == 4 * 100.0 + 16 * 12.0);
}

TEST_CASE("rails beyond the switch radix become leaf-spine") {
  EconConfig c = unit_config();
  c.switch_radix = 16;
  const Bom bom = electrical_fabric_bom(40, 2, c);
  const auto ref = oracle::electrical_count(40, 2, 1, 16);
  CHECK(bom.tiers == 2);
  CHECK(bom.count("switch") == ref.switches);
  CHECK(bom.count("transceiver") == ref.transceivers);
  CHECK(ref.switches == 2 * (5 + 3));
}

TEST_CASE("no domains means an empty bill") {
  const Bom bom = electrical_fabric_bom(0, 8, unit_config());
  CHECK(bom.total_cost == 0.0);
  CHECK(bom.total_power == 0.0);
  CHECK(bom.count("switch") == 0);
}

TEST_CASE("optical rails that exceed the radix are rejected") {
  EconConfig c = unit_config();
  c.ocs_radix = 8;
  const Topology topo = build_topology(spec(8, 2, 2, true));
  CHECK(error_of([&] { ocs_fabric_bom(topo, c); }) == ErrorCode::RadixExceeded);
}

TEST_CASE("invalid unit values") {
  EconConfig c = unit_config();
  c.switch_cost = -1;
  CHECK(error_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = unit_config();
  c.switch_radix = 1;
  CHECK(error_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("savings grow with switch price and power dominates") {
  const Topology topo = build_topology(spec(64, 8, 2, true));
  double previous = -1.0;
  for (double price : {5000.0, 10000.0, 20000.0, 40000.0}) {
    EconConfig c = unit_config();
    c.switch_cost = price;
    const Savings s = compare(electrical_fabric_bom(topo, c), ocs_fabric_bom(topo, c));
    CHECK(s.cost > previous);
    previous = s.cost;
  }
  const Topology small = build_topology(spec(4, 4, 1, true));
  const EconConfig c = unit_config();
  REQUIRE(c.switch_power > c.ocs_chassis_power);
  CHECK(electrical_fabric_bom(small, c).total_power > ocs_fabric_bom(small, c).total_power);
}

TEST_CASE("bill totals match an independent recount") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint32_t> domains(2, 300), gpus(1, 8), radix_pow(3, 7);
  std::uniform_int_distribution<int> ports_idx(0, 2);
  std::uniform_real_distribution<double> price(1.0, 50000.0);
  for (int i = 0; i < 20; ++i) {
    const std::uint32_t d = domains(rng), g = gpus(rng);
    const std::uint32_t ports = std::array<std::uint32_t, 3>{1, 2, 4}[ports_idx(rng)];
    EconConfig c;
    c.switch_cost = price(rng);
    c.switch_power = price(rng);
    c.switch_radix = 1u << radix_pow(rng);
    c.transceiver_cost = price(rng);
    c.transceiver_power = price(rng);
    c.ocs_port_cost = price(rng);
    c.ocs_chassis_power = price(rng);
    c.electrical_ports_per_gpu = 1 + i % 2;
    c.ocs_ports_per_transceiver = ports >= 2 ? 2 : 1;
    const Topology topo = build_topology(spec(d, g, ports, true, 0.0, 4096));

    const auto e = oracle::electrical_count(d, g, c.electrical_ports_per_gpu, c.switch_radix);
    const Bom eb = electrical_fabric_bom(topo, c);
    CHECK(eb.count("switch") == e.switches);
    CHECK(eb.count("transceiver") == e.transceivers);
    CHECK(eb.total_cost == doctest::Approx(oracle::dot({{e.switches, c.switch_cost},
                                                        {e.transceivers, c.transceiver_cost}})));
    CHECK(eb.total_power == doctest::Approx(oracle::dot({{e.switches, c.switch_power},
                                                         {e.transceivers, c.transceiver_power}})));

    const auto o = oracle::ocs_count(d, g, ports, c.ocs_ports_per_transceiver, 4096);
    const Bom ob = ocs_fabric_bom(topo, c);
    CHECK(ob.count("ocs_port") == o.ports);
    CHECK(ob.count("ocs_chassis") == o.chassis);
    CHECK(ob.count("transceiver") == o.transceivers);
    CHECK(ob.total_cost == doctest::Approx(oracle::dot({{o.ports, c.ocs_port_cost}, {o.transceivers, c.transceiver_cost}})));
    CHECK(ob.total_power ==
          doctest::Approx(oracle::dot({{o.chassis, c.ocs_chassis_power}, {o.transceivers, c.transceiver_power}})));
  }
}

TEST_CASE("scalability table") {
  const auto rows = scalability_table(default_scaleup_systems(), default_ocs_technologies());
  REQUIRE(rows.size() == 14);
  const std::vector<std::uint64_t> expected{576,   64,   1152,  128,  4608,  512,  11520,
                                            1280,  20736, 2304, 18432, 2048, 36288, 4032};
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].max_gpus == expected[i]);
  CHECK(rows[8].tech.name == "Piezo");
  CHECK(rows[8].system.name == "GB200");
}

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

#include "opus/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "opus/error.hpp"

namespace opus {

std::string timeline_csv(const EventDag& dag, const SimResult& result) {
  std::string out = "event_id,rank,start_s,end_s\n";
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const Event& ev = dag.events()[i];
    const EventTiming& t = result.event_times[i];
    for (RankId r : ev.ranks) out += fmt::format("{},{},{:.12g},{:.12g}\n", ev.id, r, t.start, t.end);
  }
  return out;
}

std::string reconfig_csv(const std::vector<ReconfigLogEntry>& log) {
  std::string out = "time_s,rail,group_id,speculative,delay_s,ports_changed\n";
  for (const auto& e : log) {
    out += fmt::format("{:.12g},{},{},{},{:.12g},{}\n", e.time, e.rail, e.group,
                       e.speculative ? 1 : 0, e.delay, fmt::join(e.ports, ";"));
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "delay_s,policy,makespan_s,overhead\n";
  for (const auto& r : rows) {
    out += fmt::format("{:.12g},{},{:.12g},{:.12g}\n", r.delay, r.policy, r.makespan, r.overhead);
  }
  return out;
}

std::string sweep_svg(const std::vector<SweepRow>& rows) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 150, kTop = 30, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double max_delay = 0.0, lo = 1.0, hi = 1.0;
  for (const auto& r : rows) {
    series[r.policy].emplace_back(r.delay * 1e3, r.overhead);
    max_delay = std::max(max_delay, r.delay * 1e3);
    lo = std::min(lo, r.overhead);
    hi = std::max(hi, r.overhead);
  }
  if (max_delay <= 0.0) max_delay = 1.0;
  if (hi - lo < 1e-9) hi = lo + 0.01;
  auto x = [&](double v) { return kLeft + v / max_delay * plot_w; };
  auto y = [&](double v) { return kTop + (hi - v) / (hi - lo) * plot_h; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n",
      kWidth, kHeight);
  out += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", kLeft,
                     kTop + plot_h, kLeft + plot_w);
  out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kLeft, kTop,
                     kTop + plot_h);
  for (int i = 0; i <= 4; ++i) {
    const double dv = max_delay * i / 4.0;
    const double ov = lo + (hi - lo) * i / 4.0;
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.4g}</text>\n", x(dv),
                       kTop + plot_h + 18, dv);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4f}</text>\n", kLeft - 6,
                       y(ov) + 4, ov);
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">reconfiguration delay (ms)</text>\n",
                     kLeft + plot_w / 2, kHeight - 10);
  out += fmt::format(
      "<text x=\"16\" y=\"{:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2f})\">"
      "iteration time / baseline</text>\n",
      kTop + plot_h / 2, kTop + plot_h / 2);

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::size_t idx = 0;
  for (auto& [policy, pts] : series) {
    std::sort(pts.begin(), pts.end());
    const char* color = kColors[idx % 4];
    std::string coords;
    for (const auto& [dx, oy] : pts) coords += fmt::format("{}{:.2f},{:.2f}", coords.empty() ? "" : " ", x(dx), y(oy));
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, coords);
    const double ly = kTop + 20 + 20.0 * static_cast<double>(idx);
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                       kLeft + plot_w + 15, ly, kLeft + plot_w + 35, color);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", kLeft + plot_w + 40, ly + 4, policy);
    ++idx;
  }
  out += "</svg>\n";
  return out;
}

std::string windows_csv(const std::vector<Window>& windows) {
  std::string out = "rail,before_phase,after_phase,start_s,end_s,size_s,next_volume_bytes,class\n";
  for (const auto& w : windows) {
    out += fmt::format("{},{},{},{:.12g},{:.12g},{:.12g},{},{}\n", w.rail, w.before_phase, w.after_phase,
                       w.start, w.end, w.size, w.next_volume_bytes, w.volume_class);
  }
  return out;
}

std::string cdf_csv(const std::vector<CdfPoint>& points) {
  std::string out = "size_s,fraction\n";
  for (const auto& p : points) out += fmt::format("{:.12g},{:.12g}\n", p.size, p.fraction);
  return out;
}

std::string bom_csv(const std::vector<Bom>& boms) {
  std::string out = "fabric,item,count,unit_cost,unit_power_w,cost,power_w\n";
  for (const auto& b : boms) {
    for (const auto& l : b.lines) {
      out += fmt::format("{},{},{},{:.12g},{:.12g},{:.12g},{:.12g}\n", b.fabric, l.item, l.count, l.unit_cost,
                         l.unit_power, l.cost(), l.power());
    }
    out += fmt::format("{},total,,,,{:.12g},{:.12g}\n", b.fabric, b.total_cost, b.total_power);
  }
  return out;
}

std::string table4_csv(const std::vector<ScalabilityRow>& rows) {
  std::string out = "technology,reconfig_ms,radix,system,scaleup_gpus,max_gpus\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:g},{},{},{},{}\n", r.tech.name, r.tech.reconfig_ms, r.tech.radix, r.system.name,
                       r.system.gpus, r.max_gpus);
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path));
  f << content;
  if (!f) throw Error(ErrorCode::IoError, fmt::format("write to {} failed", path));
}

}  // namespace opus

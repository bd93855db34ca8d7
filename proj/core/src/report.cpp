// Copyright 2026 The ntlkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ntl/bench.hpp"

namespace ntl::bench {

namespace {

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string attack_label(const AttackRow& row) {
  return std::string(attacks::to_string(row.spec.family)) + "/" + attacks::to_string(row.spec.strategy);
}

}  // namespace

std::string format_delta(double delta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "(%+.1f)", delta);
  return buf;
}

std::string render_csv(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << "run_id,method,dataset,row,SA,TA,OA,SA_delta,TA_delta\n";
  for (const auto& rec : records) {
    os << rec.run_id << "," << rec.method_name << "," << rec.dataset_name << ",pretrain," << fmt1(rec.pretrain.sa)
       << "," << fmt1(rec.pretrain.ta) << "," << fmt1(rec.pretrain.oa) << ",,\n";
    for (const auto& row : rec.attack_rows) {
      os << rec.run_id << "," << rec.method_name << "," << rec.dataset_name << "," << attack_label(row) << ","
         << fmt1(row.post.sa) << "," << fmt1(row.post.ta) << "," << fmt1(row.post.oa) << ","
         << format_delta(row.sa_delta()) << "," << format_delta(row.ta_delta()) << "\n";
    }
  }
  return os.str();
}

std::string render_markdown(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << "| run | method | dataset | row | SA | TA | OA |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& rec : records) {
    os << "| " << rec.run_id << " | " << rec.method_name << " | " << rec.dataset_name << " | pretrain | "
       << fmt1(rec.pretrain.sa) << " | " << fmt1(rec.pretrain.ta) << " | " << fmt1(rec.pretrain.oa) << " |\n";
    for (const auto& row : rec.attack_rows) {
      os << "| " << rec.run_id << " | " << rec.method_name << " | " << rec.dataset_name << " | " << attack_label(row)
         << " | " << fmt1(row.post.sa) << " " << format_delta(row.sa_delta()) << " | " << fmt1(row.post.ta) << " "
         << format_delta(row.ta_delta()) << " | " << fmt1(row.post.oa) << " |\n";
    }
  }
  return os.str();
}

std::string render_svg_bars(const std::vector<RunRecord>& records) {
  // One bar per row (pretrain + attacks), grouped by run; bar height = OA.
  struct Bar {
    std::string label;
    double oa;
  };
  std::vector<Bar> bars;
  for (const auto& rec : records) {
    bars.push_back({rec.method_name + " pretrain", rec.pretrain.oa});
    for (const auto& row : rec.attack_rows) bars.push_back({rec.method_name + " " + attack_label(row), row.post.oa});
  }
  const int bar_w = 26, gap = 10, chart_h = 240, label_h = 150, left = 50;
  const int width = left + static_cast<int>(bars.size()) * (bar_w + gap) + 20;
  const int height = chart_h + label_h + 30;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<text x=\"6\" y=\"16\" font-size=\"13\">overall score (OA)</text>\n";
  for (int tick = 0; tick <= 100; tick += 25) {
    int y = 20 + chart_h - tick * chart_h / 100;
    os << "<line x1=\"" << left - 6 << "\" y1=\"" << y << "\" x2=\"" << width - 10 << "\" y2=\"" << y
       << "\" stroke=\"#ccc\"/>\n";
    os << "<text x=\"8\" y=\"" << y + 4 << "\" font-size=\"11\">" << tick << "</text>\n";
  }
  int x = left;
  for (const auto& bar : bars) {
    int h = static_cast<int>(std::clamp(bar.oa, 0.0, 100.0) * chart_h / 100.0);
    int y = 20 + chart_h - h;
    os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w << "\" height=\"" << h
       << "\" fill=\"#7884ac\"/>\n";
    os << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << 20 + chart_h + 12 << "\" font-size=\"10\" transform=\"rotate(45 "
       << x + bar_w / 2 << " " << 20 + chart_h + 12 << ")\">" << bar.label << "</text>\n";
    os << "<text x=\"" << x << "\" y=\"" << y - 4 << "\" font-size=\"10\">" << fmt1(bar.oa) << "</text>\n";
    x += bar_w + gap;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ntl::bench

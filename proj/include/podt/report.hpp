#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "podt/config.hpp"
#include "podt/engine.hpp"

namespace podt {

/// Full-precision text that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kMetricsHeader =
    "cycle,malicious_responses,attack_success_ratio,blocks_created,blocks_accepted";

inline void write_metrics_csv(std::ostream& os, const std::vector<CycleMetrics>& series) {
  os << kMetricsHeader << '\n';
  for (const CycleMetrics& m : series) {
    os << m.cycle << ',' << m.malicious_responses << ',' << format_double(m.attack_success_ratio)
       << ',' << m.blocks_created << ',' << m.blocks_accepted << '\n';
  }
}

inline void write_malicious_by_kind_csv(std::ostream& os, const std::vector<CycleMetrics>& series) {
  os << "cycle,ordinary,normal_dmb,intensive_dmb\n";
  for (const CycleMetrics& m : series) {
    os << m.cycle << ',' << m.malicious_by_kind[1] << ',' << m.malicious_by_kind[2] << ','
       << m.malicious_by_kind[3] << '\n';
  }
}

inline void write_trust_trace_csv(std::ostream& os, const std::vector<TraceSample>& trace,
                                  std::size_t chains) {
  os << "cycle,user_id,kind,active_chains,gt";
  for (std::size_t j = 0; j < chains; ++j) os << ",lt_" << j;
  os << '\n';
  for (const TraceSample& t : trace) {
    os << t.cycle << ',' << t.user << ',' << to_string(t.kind) << ',';
    for (std::size_t k = 0; k < t.active_chains.size(); ++k)
      os << (k ? ";" : "") << t.active_chains[k];
    os << ',' << format_double(t.global_trust);
    for (double lt : t.local_trust) os << ',' << format_double(lt);
    os << '\n';
  }
}

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json summary_json(const RunResult& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = optional_json(r.summary.accuracy);
  j["kill_chain_accuracy"] = optional_json(r.summary.kill_chain_accuracy);
  j["mask_chain_accuracy"] = optional_json(r.summary.mask_chain_accuracy);
  j["detection_rate"] = optional_json(r.summary.detection_rate);
  j["overload"] = r.summary.overload;
  j["storage_mb"] = r.summary.storage_mb;
  j["wall_time"] = r.summary.wall_time_s;
  j["blocks_created"] = r.summary.blocks_created;
  j["blocks_accepted"] = r.summary.blocks_accepted;
  j["mean_chain_miners"] = r.mean_chain_miners;
  j["false_positives"] = r.false_positives;
  j["kill_chains"] = r.kill_chains;
  j["sidechain"] = {{"blocks", r.sidechain_blocks},
                    {"tip_hash", r.sidechain_tip},
                    {"verified", r.sidechain_verified}};
  j["training"] = {{"trained", r.training.trained},
                   {"used_fallback", r.training.used_fallback},
                   {"sample_count", r.training.sample_count},
                   {"positives", r.training.positives},
                   {"trainings", r.training.trainings},
                   {"note", r.training.note}};
  j["selection"] = {{"checks", r.audit.checks},
                    {"violations", r.audit.violations},
                    {"network_reselections", r.audit.network_reselections},
                    {"chain_reselections", r.audit.chain_reselections},
                    {"leader_elections", r.audit.leader_elections},
                    {"degenerate_elections", r.audit.degenerate_elections}};
  j["config"] = to_json(r.config);
  return j;
}

struct PlotSeries {
  std::string name;
  std::vector<double> y;
};

/// Minimal SVG line chart: one polyline per series over a shared x axis.
inline void write_svg_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                            const std::vector<double>& x, const std::vector<PlotSeries>& series) {
  constexpr double W = 720, H = 420, L = 70, R = 170, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!x.empty()) {
    x0 = *std::min_element(x.begin(), x.end());
    x1 = *std::max_element(x.begin(), x.end());
  }
  bool any = false;
  for (const PlotSeries& s : series)
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      if (!any) y0 = y1 = v;
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
      any = true;
    }
  y0 = std::min(y0, 0.0);
  if (y1 <= y0) y1 = y0 + 1;
  if (x1 <= x0) x1 = x0 + 1;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
     << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", yv);
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << buf
       << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.4g", xv);
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << buf
       << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << x_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* c = colors[s % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size() && i < series[s].y.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      os << px(x[i]) << ',' << py(series[s].y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32
       << "\" y2=\"" << ly << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << series[s].name
       << "</text>\n";
  }
  os << "</svg>\n";
}

/// Selection dump rows: round,chain_id,role,user_id. Network miners are
/// not tied to a chain and leave chain_id empty.
inline void write_miner_dump_header(std::ostream& os) { os << "round,chain_id,role,user_id\n"; }

inline void write_miner_dump(std::ostream& os, std::size_t round, const MinerSets& sets) {
  for (UserId u : sets.network) os << round << ",,network," << u << '\n';
  for (std::size_t j = 0; j < sets.chain.size(); ++j) {
    for (UserId u : sets.chain[j]) os << round << ',' << j << ",chain," << u << '\n';
    if (sets.leader[j].id) os << round << ',' << j << ",leader," << *sets.leader[j].id << '\n';
  }
}

}  // namespace podt

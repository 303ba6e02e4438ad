// SPDX-License-Identifier: Apache-2.0

#include "oea/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "oea/io.hpp"
#include "oea/simulate.hpp"

namespace oea {

namespace {

double snap(double v, double bin) { return std::round(v / bin) * bin; }

double quality_or_zero(const SweepPoint& p) {
  return p.quality_delta.value_or(0.0);
}

bool dominates(const SweepPoint& a, const SweepPoint& b) {
  const double aq = quality_or_zero(a);
  const double bq = quality_or_zero(b);
  if (a.mean_active_experts > b.mean_active_experts || aq > bq) {
    return false;
  }
  return a.mean_active_experts < b.mean_active_experts || aq < bq;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

}  // namespace

std::vector<RoutingConfig> default_sweep_grid(int n_experts, int k) {
  if (n_experts < 1 || k < 1 || k > n_experts) {
    throw std::invalid_argument("default_sweep_grid: need 1 <= k <= N");
  }
  std::vector<int> max_ps;
  for (int m : {k, 2 * k, 4 * k, n_experts}) {
    m = std::min(m, n_experts);
    if (std::find(max_ps.begin(), max_ps.end(), m) == max_ps.end()) {
      max_ps.push_back(m);
    }
  }
  const int k0_lo = std::max(1, (k + 1) / 2);
  const int kmax_lo = std::max(1, k - 1);
  const int kmax_hi = std::min(n_experts, k + std::max(1, (3 * k) / 8));

  std::vector<RoutingConfig> grid;
  grid.push_back(RoutingConfig::vanilla(k));  // cost/quality anchor
  for (int k0 = k0_lo; k0 <= std::min(k, n_experts); ++k0) {
    for (int kmax = std::max(kmax_lo, k0); kmax <= kmax_hi; ++kmax) {
      for (int pi = 4; pi <= 10; ++pi) {
        for (int max_p : max_ps) {
          grid.push_back(RoutingConfig::oea(k0, pi / 10.0, kmax, max_p, k));
        }
      }
    }
  }
  return grid;
}

std::vector<SweepPoint> sweep(const ScoreGenConfig& gen,
                              const std::vector<RoutingConfig>& grid,
                              const LatencyParams& latency,
                              const MoeLayerParams<double>* layer,
                              const RoundingRule& rounding, int threads) {
  if (grid.empty()) {
    throw std::invalid_argument("sweep: empty config grid");
  }
  std::vector<SweepPoint> pts;
  pts.reserve(grid.size());
  for (const auto& cfg : grid) {
    const DecodeTrace trace =
        layer != nullptr ? simulate_decode(*layer, gen, cfg, latency, threads)
                         : simulate_decode(gen, cfg, latency, threads);
    SweepPoint p;
    p.config = trace.routing;
    p.mean_active_experts = trace.aggregates.mean_active_experts;
    p.quality_delta = trace.aggregates.mean_divergence;
    if (rounding.enabled) {
      p.mean_active_experts =
          snap(p.mean_active_experts, rounding.experts_bin);
      if (p.quality_delta) {
        p.quality_delta = snap(*p.quality_delta, rounding.quality_bin);
      }
      p.rounded = true;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

std::vector<std::size_t> pareto_indices(const std::vector<SweepPoint>& pts) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i && dominates(pts[j], pts[i])) {
        dominated = true;
        break;
      }
    }
    if (!dominated) {
      keep.push_back(i);
    }
  }
  return keep;
}

std::vector<SweepPoint> pareto_frontier(const std::vector<SweepPoint>& pts) {
  std::vector<std::size_t> idx = pareto_indices(pts);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (pts[a].mean_active_experts != pts[b].mean_active_experts) {
      return pts[a].mean_active_experts < pts[b].mean_active_experts;
    }
    if (quality_or_zero(pts[a]) != quality_or_zero(pts[b])) {
      return quality_or_zero(pts[a]) < quality_or_zero(pts[b]);
    }
    return a < b;
  });
  std::vector<SweepPoint> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    out.push_back(pts[i]);
  }
  return out;
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepPoint>& pts) {
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("write_sweep_csv: cannot open " + path);
  }
  out << "mode,k,k0,p,k_max,max_p,cap,mean_active_experts,quality_delta,"
         "rounded\n";
  for (const auto& p : pts) {
    const auto& c = p.config;
    out << to_string(c.mode) << "," << c.k << "," << c.k0 << ","
        << format_double(c.p) << "," << c.k_max << "," << c.max_p << ","
        << to_string(c.cap) << "," << format_double(p.mean_active_experts)
        << ",";
    if (p.quality_delta) {
      out << format_double(*p.quality_delta);
    }
    out << "," << (p.rounded ? 1 : 0) << "\n";
  }
}

std::vector<SweepPoint> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("read_sweep_csv: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("read_sweep_csv: " + path + " is empty");
  }
  const std::vector<std::string> expected = {
      "mode", "k",     "k0",  "p", "k_max", "max_p",
      "cap",  "mean_active_experts", "quality_delta", "rounded"};
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) {
    // tolerate trailing carriage returns from foreign tools
    while (!h.empty() && (h.back() == '\r' || h.back() == ' ')) {
      h.pop_back();
    }
  }
  if (header != expected) {
    throw std::invalid_argument("read_sweep_csv: " + path +
                                " has an unexpected header");
  }
  std::vector<SweepPoint> pts;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    auto f = split_line(line);
    if (!f.empty() && !f.back().empty() && f.back().back() == '\r') {
      f.back().pop_back();
    }
    const std::string where =
        "read_sweep_csv: " + path + " line " + std::to_string(line_no);
    if (f.size() != expected.size()) {
      throw std::invalid_argument(where + ": wrong column count");
    }
    try {
      SweepPoint p;
      p.config.mode = routing_mode_from_string(f[0]);
      p.config.k = std::stoi(f[1]);
      p.config.k0 = std::stoi(f[2]);
      p.config.p = std::stod(f[3]);
      p.config.k_max = std::stoi(f[4]);
      p.config.max_p = std::stoi(f[5]);
      p.config.cap = cap_semantics_from_string(f[6]);
      p.mean_active_experts = std::stod(f[7]);
      if (!f[8].empty()) {
        p.quality_delta = std::stod(f[8]);
      }
      p.rounded = std::stoi(f[9]) != 0;
      pts.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
  }
  if (pts.empty()) {
    throw std::invalid_argument("read_sweep_csv: " + path + " has no rows");
  }
  return pts;
}

}  // namespace oea

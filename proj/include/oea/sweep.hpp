// SPDX-License-Identifier: Apache-2.0
//
// Configuration sweeps and Pareto selection over the two objectives the
// routing trade-off cares about: mean activated experts per step (cost,
// lower is better) and output divergence from vanilla top-k (quality delta,
// lower is better). Optional rounding snaps both objectives to coarse bins
// before comparison so that measurement-noise-sized differences do not
// manufacture frontier points.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "oea/latency.hpp"
#include "oea/moe_layer.hpp"
#include "oea/routing.hpp"
#include "oea/score_gen.hpp"

namespace oea {

struct RoundingRule {
  bool enabled = false;
  double quality_bin = 0.005;
  double experts_bin = 0.1;
};

struct SweepPoint {
  RoutingConfig config;
  double mean_active_experts = 0.0;
  std::optional<double> quality_delta;  // mean divergence vs vanilla
  bool rounded = false;
};

/// A vanilla anchor point followed by a grid spanning baseline sizes k0 in
/// [ceil(k/2), k], caps k_max in [k-1, k + max(1, 3k/8)], p in {0.4 .. 1.0}
/// by 0.1 and piggyback depths {k, 2k, 4k, N}, clamped and deduplicated.
std::vector<RoutingConfig> default_sweep_grid(int n_experts, int k);

/// Simulates every grid config over the same generator. When `layer` is
/// given, scores come from the layer's router (see the toy simulate_decode
/// overload) and each point carries a quality delta.
std::vector<SweepPoint> sweep(const ScoreGenConfig& gen,
                              const std::vector<RoutingConfig>& grid,
                              const LatencyParams& latency,
                              const MoeLayerParams<double>* layer = nullptr,
                              const RoundingRule& rounding = {},
                              int threads = 1);

/// Indices of non-dominated points in input order. A point dominates
/// another when it is <= on both objectives and strictly < on at least one;
/// exact ties survive. Missing quality deltas compare as zero.
std::vector<std::size_t> pareto_indices(const std::vector<SweepPoint>& pts);

/// Non-dominated points sorted by (mean_active_experts, quality_delta).
std::vector<SweepPoint> pareto_frontier(const std::vector<SweepPoint>& pts);

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepPoint>& pts);
std::vector<SweepPoint> read_sweep_csv(const std::string& path);

}  // namespace oea

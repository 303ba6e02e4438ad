// SPDX-License-Identifier: Apache-2.0
//
// Decode-time simulation: route a stream of score batches, account activated
// experts and loads per (step, layer), and price each step with the latency
// model. Every trace carries a vanilla top-k shadow run over the same scores
// so normalized ratios and paired comparisons need no second pass. Records
// are computed independently per (step, layer), which is what makes the
// optional thread pool bit-for-bit equal to the sequential path.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oea/latency.hpp"
#include "oea/moe_layer.hpp"
#include "oea/routing.hpp"
#include "oea/score_gen.hpp"

namespace oea {

struct StepRecord {
  int layer = 0;
  int step = 0;
  int active_experts = 0;  // distinct experts activated by the batch
  long total_load = 0;     // sum of per-expert token counts
  double modeled_latency_us = 0.0;
  std::optional<double> divergence;  // mean relative error vs vanilla output
};

struct TraceAggregates {
  double mean_active_experts = 0.0;
  double mean_total_load = 0.0;
  double mean_latency_us = 0.0;
  double vanilla_mean_active_experts = 0.0;
  double vanilla_mean_total_load = 0.0;
  double vanilla_mean_latency_us = 0.0;
  // Ratios of the means above (NaN when the vanilla mean is zero).
  double normalized_active_experts = 0.0;
  double normalized_latency = 0.0;
  std::optional<double> mean_divergence;
};

struct DecodeTrace {
  RoutingConfig routing;  // resolved configuration the records were run with
  std::vector<StepRecord> records;          // ordered by (step, layer)
  std::vector<StepRecord> vanilla_records;  // shadow run, same order
  TraceAggregates aggregates;
};

/// Routes gen.steps x gen.layers score batches. `threads` > 1 distributes
/// (step, layer) cells over a worker pool; output is identical either way.
DecodeTrace simulate_decode(const ScoreGenConfig& gen,
                            const RoutingConfig& routing,
                            const LatencyParams& latency, int threads = 1);

/// Toy-layer variant: embeddings are drawn per (seed, step, layer, token),
/// scores come from the layer's own router, and each record additionally
/// carries the output divergence against the vanilla top-k mixture.
/// gen.kind is ignored; gen supplies batch/steps/layers/seed and must agree
/// with the layer on expert count.
DecodeTrace simulate_decode(const MoeLayerParams<double>& layer,
                            const ScoreGenConfig& gen,
                            const RoutingConfig& routing,
                            const LatencyParams& latency, int threads = 1);

struct PaddingVariant {
  std::string name;
  std::vector<StepRecord> records;
  double mean_active_experts = 0.0;
  double mean_total_load = 0.0;
  double mean_latency_us = 0.0;
};

struct PaddingReport {
  int real_batch = 0;
  int padded_batch = 0;
  PaddingVariant no_padding;      // batch = real_batch
  PaddingVariant naive_padding;   // batch = padded_batch, pad rows routed
  PaddingVariant masked_padding;  // batch = padded_batch, pad rows masked
  bool masked_matches_no_padding = false;
};

/// Runs the same token stream three ways to expose the cost of routing pad
/// rows. Token scores are keyed by token index, so the real rows are
/// bitwise identical across variants. Replay sources are not supported.
PaddingReport padding_experiment(const ScoreGenConfig& gen,
                                 const RoutingConfig& routing, int pad_to,
                                 const LatencyParams& latency,
                                 int threads = 1);

/// CSV with columns layer,step,T,total_load,modeled_latency_us and a final
/// divergence column when the trace has one.
void write_trace_csv(const std::string& path, const DecodeTrace& trace);

/// JSON summary: effective configs plus the aggregate block.
void write_trace_summary_json(const std::string& path,
                              const DecodeTrace& trace,
                              const ScoreGenConfig& gen,
                              const LatencyParams& latency);

void write_padding_json(const std::string& path, const PaddingReport& report,
                        const ScoreGenConfig& gen,
                        const RoutingConfig& routing,
                        const LatencyParams& latency);

}  // namespace oea

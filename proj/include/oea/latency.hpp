// SPDX-License-Identifier: Apache-2.0
//
// Memory-bound roofline latency model for an MoE block during decode, the
// closed-form expected activated-expert count under uniform routing, and an
// ordinary least-squares fit of (T, latency) observations.

#pragma once

#include <Eigen/Core>

#include <vector>

#include "oea/routing.hpp"

namespace oea {

/// Per-expert cost model f(0) = 0, f(n) = a*n + b (microseconds): b is the
/// weight-fetch cost paid once per activated expert, a the per-token compute.
struct LatencyParams {
  double a_us = 0.0;
  double b_us = 0.0;
};

struct LatencyObservation {
  int active_experts = 0;  // T
  double latency_us = 0.0;
};

/// OLS fit of latency on T. The slope estimates b; the intercept absorbs
/// per-layer fixed overheads and the compute floor, so params.a_us stays 0
/// (it is not identifiable from (T, latency) pairs alone).
struct FitResult {
  LatencyParams params;
  double intercept_us = 0.0;
  double r_squared = 0.0;
  double residual_std = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
};

/// f(n): 0 when n == 0, else a*n + b.
double expert_latency(long tokens, const LatencyParams& params);

/// Sum of f(cnt_i) over all experts: b*T + a*total_load.
double moe_latency(const Eigen::VectorXi& loads, const LatencyParams& params);
double moe_latency(const RoutingPlan& plan, const LatencyParams& params);

/// N * (1 - (1 - k/N)^B): expected activated experts when B tokens each pick
/// a uniform-random k-subset of N experts.
double expected_active_experts(int n_experts, int k, int batch);

/// Throws std::invalid_argument on fewer than 2 points and std::domain_error
/// when all T are equal (degenerate design).
FitResult fit_linear(const std::vector<LatencyObservation>& observations);

/// moe_latency(plan_a) / moe_latency(plan_b). Throws std::invalid_argument on
/// expert-count mismatch and std::domain_error when plan_b's latency is 0.
double estimate_speedup(const RoutingPlan& plan_a, const RoutingPlan& plan_b,
                        const LatencyParams& params);

}  // namespace oea

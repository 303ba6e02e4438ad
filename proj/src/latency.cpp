// SPDX-License-Identifier: Apache-2.0

#include "oea/latency.hpp"

#include <cmath>
#include <stdexcept>

namespace oea {

double expert_latency(long tokens, const LatencyParams& params) {
  if (tokens < 0) {
    throw std::invalid_argument("expert_latency: token count must be >= 0");
  }
  if (tokens == 0) return 0.0;
  return params.a_us * static_cast<double>(tokens) + params.b_us;
}

double moe_latency(const Eigen::VectorXi& loads, const LatencyParams& params) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < loads.size(); ++i) {
    total += expert_latency(loads[i], params);
  }
  return total;
}

double moe_latency(const RoutingPlan& plan, const LatencyParams& params) {
  return moe_latency(plan.loads, params);
}

double expected_active_experts(int n_experts, int k, int batch) {
  if (n_experts < 1 || k < 1 || k > n_experts || batch < 1) {
    throw std::invalid_argument(
        "expected_active_experts: need 1 <= k <= N and B >= 1");
  }
  const double miss = 1.0 - static_cast<double>(k) / n_experts;
  return n_experts * (1.0 - std::pow(miss, batch));
}

FitResult fit_linear(const std::vector<LatencyObservation>& observations) {
  const std::size_t n = observations.size();
  if (n < 2) {
    throw std::invalid_argument("fit_linear: need at least 2 observations");
  }
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& obs : observations) {
    mean_x += obs.active_experts;
    mean_y += obs.latency_us;
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& obs : observations) {
    const double dx = obs.active_experts - mean_x;
    const double dy = obs.latency_us - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) {
    throw std::domain_error(
        "fit_linear: all observations share one T value (degenerate design)");
  }

  FitResult fit;
  fit.params.a_us = 0.0;
  fit.params.b_us = sxy / sxx;
  fit.intercept_us = mean_y - fit.params.b_us * mean_x;

  double ssr = 0.0;
  for (const auto& obs : observations) {
    const double e = obs.latency_us -
                     (fit.intercept_us + fit.params.b_us * obs.active_experts);
    ssr += e * e;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  if (n > 2) {
    const double sigma2 = ssr / static_cast<double>(n - 2);
    fit.residual_std = std::sqrt(sigma2);
    fit.slope_stderr = std::sqrt(sigma2 / sxx);
    fit.intercept_stderr = std::sqrt(
        sigma2 * (1.0 / static_cast<double>(n) + mean_x * mean_x / sxx));
  }
  return fit;
}

double estimate_speedup(const RoutingPlan& plan_a, const RoutingPlan& plan_b,
                        const LatencyParams& params) {
  if (plan_a.n_experts != plan_b.n_experts) {
    throw std::invalid_argument("estimate_speedup: expert counts differ");
  }
  const double denom = moe_latency(plan_b, params);
  if (denom == 0.0) {
    throw std::domain_error("estimate_speedup: reference latency is zero");
  }
  return moe_latency(plan_a, params) / denom;
}

}  // namespace oea

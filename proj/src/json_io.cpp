// SPDX-License-Identifier: Apache-2.0

#include "oea/json_io.hpp"

#include <fstream>
#include <stdexcept>

namespace oea {

nlohmann::json routing_config_json(const RoutingConfig& cfg) {
  nlohmann::json j;
  j["mode"] = to_string(cfg.mode);
  j["k"] = cfg.k;
  if (cfg.mode != RoutingMode::Vanilla) {
    j["k0"] = cfg.k0;
    j["p"] = cfg.p;
    j["k_max"] = cfg.k_max;
    j["max_p"] = cfg.max_p;
    j["cap"] = to_string(cfg.cap);
  }
  return j;
}

nlohmann::json gen_config_json(const ScoreGenConfig& cfg) {
  nlohmann::json j;
  j["kind"] = to_string(cfg.kind);
  j["n_experts"] = cfg.n_experts;
  j["batch"] = cfg.batch;
  j["steps"] = cfg.steps;
  j["layers"] = cfg.layers;
  j["seed"] = cfg.seed;
  switch (cfg.kind) {
    case GenKind::Dirichlet:
      j["alpha"] = cfg.alpha;
      break;
    case GenKind::Clustered:
      j["groups"] = cfg.groups;
      j["within_group_concentration"] = cfg.within_group_concentration;
      j["between_group_spread"] = cfg.between_group_spread;
      break;
    case GenKind::Replay:
      j["trace_path"] = cfg.trace_path;
      break;
  }
  return j;
}

nlohmann::json latency_params_json(const LatencyParams& params) {
  nlohmann::json j;
  j["a_us"] = params.a_us;
  j["b_us"] = params.b_us;
  return j;
}

nlohmann::json plan_json(const RoutingPlan& plan) {
  nlohmann::json j;
  j["n_experts"] = plan.n_experts;
  j["active_experts"] = plan.active_count;
  j["total_load"] = plan.total_load;
  j["active_union"] = plan.active_union;
  nlohmann::json loads = nlohmann::json::array();
  for (Eigen::Index e = 0; e < plan.loads.size(); ++e) {
    loads.push_back(plan.loads(e));
  }
  j["loads"] = std::move(loads);
  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t i = 0; i < plan.sets.size(); ++i) {
    nlohmann::json t;
    t["experts"] = plan.sets[i];
    t["weights"] = plan.weights[i];
    tokens.push_back(std::move(t));
  }
  j["tokens"] = std::move(tokens);
  return j;
}

nlohmann::json fit_json(const FitResult& fit, int n_observations) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["type"] = "latency_fit";
  j["n_observations"] = n_observations;
  j["per_expert_us"] = fit.params.b_us;
  j["intercept_us"] = fit.intercept_us;
  j["r_squared"] = fit.r_squared;
  j["residual_std_us"] = fit.residual_std;
  j["slope_stderr_us"] = fit.slope_stderr;
  j["intercept_stderr_us"] = fit.intercept_stderr;
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("write_json_file: cannot open " + path);
  }
  out << j.dump(2) << "\n";
}

}  // namespace oea

// SPDX-License-Identifier: Apache-2.0
//
// JSON building blocks shared by the trace/sweep writers and the CLI, so
// every artifact echoes configuration the same way.

#pragma once

#include <json.hpp>

#include "oea/latency.hpp"
#include "oea/routing.hpp"
#include "oea/score_gen.hpp"

namespace oea {

nlohmann::json routing_config_json(const RoutingConfig& cfg);
nlohmann::json gen_config_json(const ScoreGenConfig& cfg);
nlohmann::json latency_params_json(const LatencyParams& params);
nlohmann::json plan_json(const RoutingPlan& plan);
nlohmann::json fit_json(const FitResult& fit, int n_observations);

void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace oea

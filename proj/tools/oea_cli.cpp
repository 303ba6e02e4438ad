// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: route score traces, simulate decode, sweep
// configurations, select Pareto frontiers, compare padding policies, and fit
// the latency model. Every artifact embeds the effective configuration and
// reruns with identical flags produce byte-identical files.

#include <cstdint>
#include <exception>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oea/io.hpp"
#include "oea/json_io.hpp"
#include "oea/latency.hpp"
#include "oea/moe_layer.hpp"
#include "oea/routing.hpp"
#include "oea/score_gen.hpp"
#include "oea/simulate.hpp"
#include "oea/sweep.hpp"

namespace {

struct RoutingFlags {
  std::string mode = "vanilla";
  int k = 8;
  int k0 = -1;     // default: k
  double p = 1.0;
  int k_max = -1;  // default: max(k, k0)
  int max_p = 0;   // 0 scans all N experts
  std::string cap = "exact";

  void attach(CLI::App* cmd) {
    cmd->add_option("--mode,--routing", mode, "Routing mode")
        ->check(CLI::IsMember({"vanilla", "pruned", "oea", "simplified"}))
        ->capture_default_str();
    cmd->add_option("--k", k, "Model experts per token")
        ->capture_default_str();
    cmd->add_option("--k0", k0, "Baseline size cap (default: k)");
    cmd->add_option("--p", p, "Cumulative-mass threshold in (0,1]")
        ->capture_default_str();
    cmd->add_option("--kmax", k_max, "Per-token expert cap (default: max(k, k0))");
    cmd->add_option("--maxp", max_p, "Deepest piggyback rank, 0 = all experts")
        ->capture_default_str();
    cmd->add_option("--cap", cap, "Cap semantics")
        ->check(CLI::IsMember({"exact", "pseudocode"}))
        ->capture_default_str();
  }

  oea::RoutingConfig build() const {
    oea::RoutingConfig cfg;
    cfg.mode = oea::routing_mode_from_string(mode);
    cfg.k = k;
    cfg.k0 = k0 < 0 ? k : k0;
    cfg.p = p;
    cfg.k_max = k_max < 0 ? std::max(k, cfg.k0) : k_max;
    cfg.max_p = max_p;
    cfg.cap = oea::cap_semantics_from_string(cap);
    return cfg;
  }
};

struct GenFlags {
  std::string gen = "dirichlet";
  int n_experts = 128;
  int batch = 16;
  int steps = 1;
  int layers = 1;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  int groups = 2;
  double concentration = 4.0;
  double spread = 2.0;
  std::string trace;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--gen", gen, "Score generator")
        ->check(CLI::IsMember({"dirichlet", "clustered", "replay"}))
        ->capture_default_str();
    cmd->add_option("--n-experts", n_experts, "Experts per layer")
        ->capture_default_str();
    cmd->add_option("--batch", batch, "Tokens per step")
        ->capture_default_str();
    cmd->add_option("--steps", steps, "Decode steps")->capture_default_str();
    cmd->add_option("--layers", layers, "Layers per step")
        ->capture_default_str();
    seed_opt = cmd->add_option("--seed", seed, "RNG seed (required unless replaying)");
    cmd->add_option("--alpha", alpha, "Dirichlet concentration")
        ->capture_default_str();
    cmd->add_option("--groups", groups, "Clustered: template count")
        ->capture_default_str();
    cmd->add_option("--concentration", concentration,
                    "Clustered: within-group concentration")
        ->capture_default_str();
    cmd->add_option("--spread", spread, "Clustered: between-group spread")
        ->capture_default_str();
    cmd->add_option("--trace", trace, "Replay: score trace path");
  }

  oea::ScoreGenConfig build() const {
    oea::ScoreGenConfig cfg;
    cfg.kind = oea::gen_kind_from_string(gen);
    if (cfg.kind != oea::GenKind::Replay && seed_opt->count() == 0) {
      throw std::invalid_argument("--seed is required for randomized runs");
    }
    cfg.n_experts = n_experts;
    cfg.batch = batch;
    cfg.steps = steps;
    cfg.layers = layers;
    cfg.seed = seed;
    cfg.alpha = alpha;
    cfg.groups = groups;
    cfg.within_group_concentration = concentration;
    cfg.between_group_spread = spread;
    cfg.trace_path = trace;
    return cfg;
  }
};

struct LatencyFlags {
  double a_us = 0.05;
  double b_us = 2.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--a-us", a_us, "Per-token-assignment cost (us)")
        ->capture_default_str();
    cmd->add_option("--b-us", b_us, "Per-activated-expert cost (us)")
        ->capture_default_str();
  }

  oea::LatencyParams build() const { return {a_us, b_us}; }
};

struct ToyFlags {
  bool toy = false;
  int embed_dim = 64;
  int hidden_dim = 96;

  void attach(CLI::App* cmd) {
    cmd->add_flag("--toy", toy, "Run a random toy layer and report divergence");
    cmd->add_option("--embed-dim", embed_dim, "Toy embedding width")
        ->capture_default_str();
    cmd->add_option("--hidden-dim", hidden_dim, "Toy expert hidden width")
        ->capture_default_str();
  }
};

int run_route(const std::string& scores_path, const RoutingFlags& routing,
              const std::string& out) {
  const auto records = oea::read_score_trace(scores_path);
  if (records.empty()) {
    throw std::invalid_argument("score trace " + scores_path +
                                " contains no records");
  }
  const auto cfg = routing.build().resolved(records.front().scores.experts());
  nlohmann::json out_records = nlohmann::json::array();
  for (const auto& rec : records) {
    const auto plan = oea::route(rec.scores, cfg);
    out_records.push_back({{"step", rec.step},
                           {"layer", rec.layer},
                           {"plan", oea::plan_json(plan)}});
  }
  nlohmann::json j{{"schema_version", 1},
                   {"type", "routing_plans"},
                   {"routing", oea::routing_config_json(cfg)},
                   {"records", out_records}};
  oea::write_json_file(out, j);
  std::cout << "routed " << records.size() << " batches -> " << out << "\n";
  return 0;
}

int run_simulate(const GenFlags& genf, const RoutingFlags& routingf,
                 const LatencyFlags& latf, const ToyFlags& toyf, int threads,
                 const std::string& out, std::string summary) {
  auto gen = genf.build();
  if (gen.kind == oea::GenKind::Replay) {
    // Replay adopts expert count and batch from the trace header; echo the
    // adopted values, not the flag defaults.
    gen = oea::ScoreSource(gen).config();
  }
  const auto routing = routingf.build();
  const auto latency = latf.build();
  oea::DecodeTrace trace;
  if (toyf.toy) {
    if (genf.seed_opt->count() == 0) {
      throw std::invalid_argument("--seed is required for randomized runs");
    }
    const auto layer = oea::make_random_layer(
        {toyf.embed_dim, toyf.hidden_dim, gen.n_experts}, gen.seed);
    trace = oea::simulate_decode(layer, gen, routing, latency, threads);
  } else {
    trace = oea::simulate_decode(gen, routing, latency, threads);
  }
  if (summary.empty()) summary = out + ".summary.json";
  oea::write_trace_csv(out, trace);
  oea::write_trace_summary_json(summary, trace, gen, latency);
  const auto& agg = trace.aggregates;
  std::cout << "mean_active_experts=" << oea::format_double(agg.mean_active_experts)
            << " normalized=" << oea::format_double(agg.normalized_active_experts)
            << " mean_latency_us=" << oea::format_double(agg.mean_latency_us)
            << "\n"
            << "wrote " << out << " and " << summary << "\n";
  return 0;
}

int run_sweep(const GenFlags& genf, int k, const LatencyFlags& latf,
              const ToyFlags& toyf, bool round, double quality_bin,
              double experts_bin, int threads, const std::string& out) {
  const auto gen = genf.build();
  const auto latency = latf.build();
  const auto grid = oea::default_sweep_grid(gen.n_experts, k);
  oea::RoundingRule rounding{round, quality_bin, experts_bin};
  std::unique_ptr<oea::MoeLayerParams<double>> layer;
  if (toyf.toy) {
    layer = std::make_unique<oea::MoeLayerParams<double>>(oea::make_random_layer(
        {toyf.embed_dim, toyf.hidden_dim, gen.n_experts}, gen.seed));
  }
  const auto points =
      oea::sweep(gen, grid, latency, layer.get(), rounding, threads);
  oea::write_sweep_csv(out, points);
  std::cout << "swept " << points.size() << " configs -> " << out << "\n";
  return 0;
}

int run_pareto(const std::string& in, const std::string& out) {
  const auto points = oea::read_sweep_csv(in);
  const auto frontier = oea::pareto_frontier(points);
  oea::write_sweep_csv(out, frontier);
  std::cout << "frontier " << frontier.size() << " of " << points.size()
            << " points -> " << out << "\n";
  return 0;
}

int run_padding(const GenFlags& genf, const RoutingFlags& routingf,
                const LatencyFlags& latf, int pad_to, int threads,
                const std::string& out) {
  const auto gen = genf.build();
  const auto routing = routingf.build();
  const auto report =
      oea::padding_experiment(gen, routing, pad_to, latf.build(), threads);
  oea::write_padding_json(out, report, gen, routing.resolved(gen.n_experts),
                          latf.build());
  std::cout << "padding mean T: no_padding="
            << oea::format_double(report.no_padding.mean_active_experts)
            << " naive=" << oea::format_double(report.naive_padding.mean_active_experts)
            << " masked=" << oea::format_double(report.masked_padding.mean_active_experts)
            << " masked_matches_no_padding="
            << (report.masked_matches_no_padding ? "true" : "false") << "\n"
            << "wrote " << out << "\n";
  return 0;
}

int run_fit(const std::string& in, const std::string& out) {
  const auto obs = oea::read_latency_csv(in);
  const auto fit = oea::fit_linear(obs);
  oea::write_json_file(out, oea::fit_json(fit, static_cast<int>(obs.size())));
  std::cout << "per_expert_us=" << oea::format_double(fit.params.b_us)
            << " intercept_us=" << oea::format_double(fit.intercept_us)
            << " r_squared=" << oea::format_double(fit.r_squared) << "\n"
            << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch-aware MoE routing: simulation, sweeps, and latency fits"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read defaults from an INI/TOML file");

  // route
  auto* route_cmd = app.add_subcommand("route", "Route a score trace to plans");
  std::string route_scores, route_out;
  RoutingFlags route_routing;
  route_cmd->add_option("--scores", route_scores, "Score trace (ndjson)")
      ->required();
  route_routing.attach(route_cmd);
  route_cmd->add_option("--out", route_out, "Output plan JSON")->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a decode trace");
  GenFlags sim_gen;
  RoutingFlags sim_routing;
  LatencyFlags sim_lat;
  ToyFlags sim_toy;
  int sim_threads = 1;
  std::string sim_out, sim_summary;
  sim_gen.attach(sim_cmd);
  sim_routing.attach(sim_cmd);
  sim_lat.attach(sim_cmd);
  sim_toy.attach(sim_cmd);
  sim_cmd->add_option("--threads", sim_threads, "Worker threads")
      ->capture_default_str();
  sim_cmd->add_option("--out", sim_out, "Output trace CSV")->required();
  sim_cmd->add_option("--summary", sim_summary,
                      "Summary JSON (default: <out>.summary.json)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep routing configurations");
  GenFlags sweep_gen;
  LatencyFlags sweep_lat;
  ToyFlags sweep_toy;
  int sweep_k = 8, sweep_threads = 1;
  bool sweep_round = false;
  double sweep_quality_bin = 0.005, sweep_experts_bin = 0.1;
  std::string sweep_out;
  sweep_gen.attach(sweep_cmd);
  sweep_lat.attach(sweep_cmd);
  sweep_toy.attach(sweep_cmd);
  sweep_cmd->add_option("--k", sweep_k, "Model experts per token")
      ->capture_default_str();
  sweep_cmd->add_flag("--round", sweep_round, "Snap objectives to bins");
  sweep_cmd->add_option("--quality-bin", sweep_quality_bin, "Quality bin width")
      ->capture_default_str();
  sweep_cmd->add_option("--experts-bin", sweep_experts_bin, "Experts bin width")
      ->capture_default_str();
  sweep_cmd->add_option("--threads", sweep_threads, "Worker threads")
      ->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "Output sweep CSV")->required();

  // pareto
  auto* pareto_cmd =
      app.add_subcommand("pareto", "Select the Pareto frontier of a sweep");
  std::string pareto_in, pareto_out;
  pareto_cmd->add_option("--in", pareto_in, "Sweep CSV")->required();
  pareto_cmd->add_option("--out", pareto_out, "Frontier CSV")->required();

  // padding
  auto* pad_cmd =
      app.add_subcommand("padding", "Compare padding policies on one stream");
  GenFlags pad_gen;
  RoutingFlags pad_routing;
  LatencyFlags pad_lat;
  int pad_to = 0, pad_threads = 1;
  std::string pad_out;
  pad_gen.attach(pad_cmd);
  pad_routing.attach(pad_cmd);
  pad_lat.attach(pad_cmd);
  pad_cmd->add_option("--pad-to", pad_to, "Padded batch size")->required();
  pad_cmd->add_option("--threads", pad_threads, "Worker threads")
      ->capture_default_str();
  pad_cmd->add_option("--out", pad_out, "Output report JSON")->required();

  // fit-latency
  auto* fit_cmd =
      app.add_subcommand("fit-latency", "Fit the linear decode latency model");
  std::string fit_in, fit_out;
  fit_cmd->add_option("--in", fit_in, "Observations CSV (T,latency_us)")
      ->required();
  fit_cmd->add_option("--out", fit_out, "Output fit JSON")->required();

  try {
    app.parse(argc, argv);
    if (route_cmd->parsed()) {
      return run_route(route_scores, route_routing, route_out);
    }
    if (sim_cmd->parsed()) {
      return run_simulate(sim_gen, sim_routing, sim_lat, sim_toy, sim_threads,
                          sim_out, sim_summary);
    }
    if (sweep_cmd->parsed()) {
      return run_sweep(sweep_gen, sweep_k, sweep_lat, sweep_toy, sweep_round,
                       sweep_quality_bin, sweep_experts_bin, sweep_threads,
                       sweep_out);
    }
    if (pareto_cmd->parsed()) return run_pareto(pareto_in, pareto_out);
    if (pad_cmd->parsed()) {
      return run_padding(pad_gen, pad_routing, pad_lat, pad_to, pad_threads,
                         pad_out);
    }
    if (fit_cmd->parsed()) return run_fit(fit_in, fit_out);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

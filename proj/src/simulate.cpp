// SPDX-License-Identifier: Apache-2.0

#include "oea/simulate.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

#include "oea/io.hpp"
#include "oea/json_io.hpp"

namespace oea {

namespace {

// Runs fn(0..total-1) on `threads` workers. Each index owns its output slot,
// so scheduling order cannot affect results.
void parallel_cells(int total, int threads,
                    const std::function<void(int)>& fn) {
  threads = std::min(std::max(threads, 1), total);
  if (threads <= 1) {
    for (int i = 0; i < total; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < total; i = next.fetch_add(1)) {
          fn(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

StepRecord make_record(int step, int layer, const RoutingPlan& plan,
                       const LatencyParams& latency) {
  StepRecord r;
  r.step = step;
  r.layer = layer;
  r.active_experts = plan.active_count;
  r.total_load = plan.total_load;
  r.modeled_latency_us = moe_latency(plan.loads, latency);
  return r;
}

double ratio_or_nan(double num, double den) {
  return den != 0.0 ? num / den
                    : std::numeric_limits<double>::quiet_NaN();
}

TraceAggregates compute_aggregates(const std::vector<StepRecord>& records,
                                   const std::vector<StepRecord>& vanilla) {
  TraceAggregates a;
  const double n = static_cast<double>(records.size());
  double div_sum = 0.0;
  int div_count = 0;
  for (const auto& r : records) {
    a.mean_active_experts += r.active_experts;
    a.mean_total_load += static_cast<double>(r.total_load);
    a.mean_latency_us += r.modeled_latency_us;
    if (r.divergence) {
      div_sum += *r.divergence;
      ++div_count;
    }
  }
  for (const auto& r : vanilla) {
    a.vanilla_mean_active_experts += r.active_experts;
    a.vanilla_mean_total_load += static_cast<double>(r.total_load);
    a.vanilla_mean_latency_us += r.modeled_latency_us;
  }
  a.mean_active_experts /= n;
  a.mean_total_load /= n;
  a.mean_latency_us /= n;
  a.vanilla_mean_active_experts /= n;
  a.vanilla_mean_total_load /= n;
  a.vanilla_mean_latency_us /= n;
  a.normalized_active_experts =
      ratio_or_nan(a.mean_active_experts, a.vanilla_mean_active_experts);
  a.normalized_latency =
      ratio_or_nan(a.mean_latency_us, a.vanilla_mean_latency_us);
  if (div_count > 0) {
    a.mean_divergence = div_sum / div_count;
  }
  return a;
}

double mean_of(const std::vector<StepRecord>& records,
               double (*get)(const StepRecord&)) {
  double s = 0.0;
  for (const auto& r : records) {
    s += get(r);
  }
  return records.empty() ? 0.0 : s / static_cast<double>(records.size());
}

void fill_variant_means(PaddingVariant& v) {
  v.mean_active_experts = mean_of(
      v.records, [](const StepRecord& r) { return double(r.active_experts); });
  v.mean_total_load = mean_of(
      v.records, [](const StepRecord& r) { return double(r.total_load); });
  v.mean_latency_us = mean_of(
      v.records, [](const StepRecord& r) { return r.modeled_latency_us; });
}

}  // namespace

DecodeTrace simulate_decode(const ScoreGenConfig& gen,
                            const RoutingConfig& routing,
                            const LatencyParams& latency, int threads) {
  const ScoreSource src(gen);
  const auto& cfg = src.config();
  const RoutingConfig rcfg = routing.resolved(cfg.n_experts);
  const RoutingConfig vcfg =
      RoutingConfig::vanilla(routing.k).resolved(cfg.n_experts);

  DecodeTrace trace;
  trace.routing = rcfg;
  const int total = cfg.steps * cfg.layers;
  trace.records.resize(static_cast<std::size_t>(total));
  trace.vanilla_records.resize(static_cast<std::size_t>(total));
  parallel_cells(total, threads, [&](int idx) {
    const int step = idx / cfg.layers;
    const int layer = idx % cfg.layers;
    const ScoreMatrix scores = src.scores(step, layer);
    trace.records[static_cast<std::size_t>(idx)] =
        make_record(step, layer, route(scores, rcfg), latency);
    trace.vanilla_records[static_cast<std::size_t>(idx)] =
        make_record(step, layer, route(scores, vcfg), latency);
  });
  trace.aggregates = compute_aggregates(trace.records, trace.vanilla_records);
  return trace;
}

DecodeTrace simulate_decode(const MoeLayerParams<double>& layer,
                            const ScoreGenConfig& gen,
                            const RoutingConfig& routing,
                            const LatencyParams& latency, int threads) {
  if (gen.batch < 1 || gen.steps < 1 || gen.layers < 1) {
    throw std::invalid_argument(
        "simulate_decode: batch, steps and layers must be >= 1");
  }
  if (gen.n_experts != layer.expert_count()) {
    throw std::invalid_argument(
        "simulate_decode: gen.n_experts " + std::to_string(gen.n_experts) +
        " does not match layer expert count " +
        std::to_string(layer.expert_count()));
  }
  const RoutingConfig rcfg = routing.resolved(layer.expert_count());
  const RoutingConfig vcfg =
      RoutingConfig::vanilla(routing.k).resolved(layer.expert_count());

  DecodeTrace trace;
  trace.routing = rcfg;
  const int total = gen.steps * gen.layers;
  trace.records.resize(static_cast<std::size_t>(total));
  trace.vanilla_records.resize(static_cast<std::size_t>(total));
  parallel_cells(total, threads, [&](int idx) {
    const int step = idx / gen.layers;
    const int lay = idx % gen.layers;
    const TokenBatch batch =
        make_random_batch(gen.batch, layer.embed_dim(), gen.seed, step, lay);
    const ScoreMatrix scores = router_scores(layer, batch);
    const RoutingPlan plan = route(scores, rcfg);
    const RoutingPlan vplan = route(scores, vcfg);
    StepRecord rec = make_record(step, lay, plan, latency);
    const RowMatrixXd ref = moe_forward(layer, batch, vplan);
    const RowMatrixXd got = moe_forward(layer, batch, plan);
    rec.divergence = output_divergence(ref, got).mean_relative_error;
    trace.records[static_cast<std::size_t>(idx)] = rec;
    trace.vanilla_records[static_cast<std::size_t>(idx)] =
        make_record(step, lay, vplan, latency);
  });
  trace.aggregates = compute_aggregates(trace.records, trace.vanilla_records);
  return trace;
}

PaddingReport padding_experiment(const ScoreGenConfig& gen,
                                 const RoutingConfig& routing, int pad_to,
                                 const LatencyParams& latency, int threads) {
  if (gen.kind == GenKind::Replay) {
    throw std::invalid_argument(
        "padding_experiment: replay sources are not supported");
  }
  gen.validate();
  if (pad_to < gen.batch) {
    throw std::invalid_argument("padding_experiment: pad_to " +
                                std::to_string(pad_to) +
                                " is smaller than the real batch " +
                                std::to_string(gen.batch));
  }

  ScoreGenConfig padded = gen;
  padded.batch = pad_to;
  const ScoreSource real_src(gen);
  const ScoreSource padded_src(padded);
  const RoutingConfig rcfg = routing.resolved(gen.n_experts);
  const int total = gen.steps * gen.layers;

  PaddingReport report;
  report.real_batch = gen.batch;
  report.padded_batch = pad_to;
  report.no_padding.name = "no_padding";
  report.naive_padding.name = "naive_padding";
  report.masked_padding.name = "masked_padding";
  report.no_padding.records.resize(static_cast<std::size_t>(total));
  report.naive_padding.records.resize(static_cast<std::size_t>(total));
  report.masked_padding.records.resize(static_cast<std::size_t>(total));

  parallel_cells(total, threads, [&](int idx) {
    const int step = idx / gen.layers;
    const int layer = idx % gen.layers;
    const ScoreMatrix real = real_src.scores(step, layer);
    ScoreMatrix pad = padded_src.scores(step, layer);
    report.no_padding.records[static_cast<std::size_t>(idx)] =
        make_record(step, layer, route(real, rcfg), latency);
    report.naive_padding.records[static_cast<std::size_t>(idx)] =
        make_record(step, layer, route(pad, rcfg), latency);
    pad.mask.resize(pad_to);
    for (int i = 0; i < pad_to; ++i) {
      pad.mask(i) = i < gen.batch;
    }
    report.masked_padding.records[static_cast<std::size_t>(idx)] =
        make_record(step, layer, route(pad, rcfg), latency);
  });
  fill_variant_means(report.no_padding);
  fill_variant_means(report.naive_padding);
  fill_variant_means(report.masked_padding);

  report.masked_matches_no_padding = true;
  for (int i = 0; i < total; ++i) {
    const auto& a = report.no_padding.records[static_cast<std::size_t>(i)];
    const auto& b =
        report.masked_padding.records[static_cast<std::size_t>(i)];
    if (a.active_experts != b.active_experts ||
        a.total_load != b.total_load ||
        a.modeled_latency_us != b.modeled_latency_us) {
      report.masked_matches_no_padding = false;
      break;
    }
  }
  return report;
}

void write_trace_csv(const std::string& path, const DecodeTrace& trace) {
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("write_trace_csv: cannot open " + path);
  }
  bool has_div = false;
  for (const auto& r : trace.records) {
    if (r.divergence) {
      has_div = true;
      break;
    }
  }
  out << "layer,step,T,total_load,modeled_latency_us";
  if (has_div) {
    out << ",divergence";
  }
  out << "\n";
  for (const auto& r : trace.records) {
    out << r.layer << "," << r.step << "," << r.active_experts << ","
        << r.total_load << "," << format_double(r.modeled_latency_us);
    if (has_div) {
      out << "," << format_double(r.divergence.value_or(0.0));
    }
    out << "\n";
  }
}

void write_trace_summary_json(const std::string& path,
                              const DecodeTrace& trace,
                              const ScoreGenConfig& gen,
                              const LatencyParams& latency) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["type"] = "trace_summary";
  j["routing"] = routing_config_json(trace.routing);
  j["score_gen"] = gen_config_json(gen);
  j["latency_model"] = latency_params_json(latency);
  j["steps_recorded"] = trace.records.size();

  const auto& a = trace.aggregates;
  nlohmann::json agg;
  agg["mean_active_experts"] = a.mean_active_experts;
  agg["mean_total_load"] = a.mean_total_load;
  agg["mean_latency_us"] = a.mean_latency_us;
  agg["vanilla_mean_active_experts"] = a.vanilla_mean_active_experts;
  agg["vanilla_mean_total_load"] = a.vanilla_mean_total_load;
  agg["vanilla_mean_latency_us"] = a.vanilla_mean_latency_us;
  agg["normalized_active_experts"] = a.normalized_active_experts;
  agg["normalized_latency"] = a.normalized_latency;
  if (a.mean_divergence) {
    agg["mean_divergence"] = *a.mean_divergence;
  }
  j["aggregates"] = std::move(agg);
  write_json_file(path, j);
}

void write_padding_json(const std::string& path, const PaddingReport& report,
                        const ScoreGenConfig& gen,
                        const RoutingConfig& routing,
                        const LatencyParams& latency) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["type"] = "padding_report";
  j["real_batch"] = report.real_batch;
  j["padded_batch"] = report.padded_batch;
  j["routing"] = routing_config_json(routing.resolved(gen.n_experts));
  j["score_gen"] = gen_config_json(gen);
  j["latency_model"] = latency_params_json(latency);
  j["masked_matches_no_padding"] = report.masked_matches_no_padding;
  for (const auto* v :
       {&report.no_padding, &report.naive_padding, &report.masked_padding}) {
    nlohmann::json jv;
    jv["mean_active_experts"] = v->mean_active_experts;
    jv["mean_total_load"] = v->mean_total_load;
    jv["mean_latency_us"] = v->mean_latency_us;
    j["variants"][v->name] = std::move(jv);
  }
  write_json_file(path, j);
}

}  // namespace oea

// SPDX-License-Identifier: Apache-2.0

#include "oea/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oea {

namespace {

constexpr double kSimplexTol = 1e-6;
constexpr double kDegenerateMass = 1e-12;

void fill_aggregates(RoutingPlan& plan) {
  plan.loads = Eigen::VectorXi::Zero(plan.n_experts);
  plan.total_load = 0;
  for (const auto& set : plan.sets) {
    for (int e : set) {
      ++plan.loads[e];
    }
    plan.total_load += static_cast<long>(set.size());
  }
  plan.active_union.clear();
  for (int e = 0; e < plan.n_experts; ++e) {
    if (plan.loads[e] > 0) plan.active_union.push_back(e);
  }
  plan.active_count = static_cast<int>(plan.active_union.size());
}

void renormalize_weights(const ScoreMatrix& scores, RoutingPlan& plan) {
  const Eigen::Index b = scores.batch();
  plan.weights.assign(static_cast<std::size_t>(b), {});
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& set = plan.sets[static_cast<std::size_t>(i)];
    if (set.empty()) continue;
    double mass = 0.0;
    for (int e : set) mass += scores.scores(i, e);
    if (!(mass > kDegenerateMass)) {
      throw std::domain_error("route: degenerate selected-set mass for token " +
                              std::to_string(i) + " (sum <= 1e-12)");
    }
    auto& w = plan.weights[static_cast<std::size_t>(i)];
    w.reserve(set.size());
    for (int e : set) w.push_back(scores.scores(i, e) / mass);
  }
}

}  // namespace

void ScoreMatrix::validate() const {
  if (scores.rows() < 1 || scores.cols() < 1) {
    throw std::invalid_argument("ScoreMatrix: dimensions must be >= 1");
  }
  if (mask.size() != 0 && mask.size() != scores.rows()) {
    throw std::invalid_argument("ScoreMatrix: mask length " +
                                std::to_string(mask.size()) +
                                " does not match batch size " +
                                std::to_string(scores.rows()));
  }
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const double v = scores(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("ScoreMatrix: row " + std::to_string(i) +
                                    " has a negative or non-finite score");
      }
      sum += v;
    }
    if (is_real(i) && std::abs(sum - 1.0) > kSimplexTol) {
      throw std::invalid_argument("ScoreMatrix: row " + std::to_string(i) +
                                  " is off the simplex (sum = " +
                                  std::to_string(sum) + ")");
    }
  }
}

const char* to_string(RoutingMode mode) {
  switch (mode) {
    case RoutingMode::Vanilla: return "vanilla";
    case RoutingMode::Pruned: return "pruned";
    case RoutingMode::Oea: return "oea";
    case RoutingMode::SimplifiedOea: return "simplified";
  }
  return "?";
}

const char* to_string(CapSemantics cap) {
  return cap == CapSemantics::ExactCap ? "exact" : "pseudocode";
}

RoutingMode routing_mode_from_string(const std::string& s) {
  if (s == "vanilla") return RoutingMode::Vanilla;
  if (s == "pruned") return RoutingMode::Pruned;
  if (s == "oea") return RoutingMode::Oea;
  if (s == "simplified") return RoutingMode::SimplifiedOea;
  throw std::invalid_argument("unknown routing mode: " + s);
}

CapSemantics cap_semantics_from_string(const std::string& s) {
  if (s == "exact") return CapSemantics::ExactCap;
  if (s == "pseudocode") return CapSemantics::PseudocodeStrict;
  throw std::invalid_argument("unknown cap semantics: " + s);
}

RoutingConfig RoutingConfig::vanilla(int k) {
  RoutingConfig cfg;
  cfg.mode = RoutingMode::Vanilla;
  cfg.k = k;
  cfg.k0 = k;
  cfg.k_max = k;
  return cfg;
}

RoutingConfig RoutingConfig::pruned(int k0, double p, int k) {
  RoutingConfig cfg;
  cfg.mode = RoutingMode::Pruned;
  cfg.k = k;
  cfg.k0 = k0;
  cfg.p = p;
  cfg.k_max = std::max(k0, k);
  return cfg;
}

RoutingConfig RoutingConfig::oea(int k0, double p, int k_max, int max_p, int k,
                                 CapSemantics cap) {
  RoutingConfig cfg;
  cfg.mode = RoutingMode::Oea;
  cfg.k = k;
  cfg.k0 = k0;
  cfg.p = p;
  cfg.k_max = k_max;
  cfg.max_p = max_p;
  cfg.cap = cap;
  return cfg;
}

RoutingConfig RoutingConfig::simplified(int k0, int k, CapSemantics cap) {
  RoutingConfig cfg;
  cfg.mode = RoutingMode::SimplifiedOea;
  cfg.k = k;
  cfg.k0 = k0;
  cfg.p = 1.0;
  cfg.k_max = k;
  cfg.max_p = 0;
  cfg.cap = cap;
  return cfg;
}

RoutingConfig RoutingConfig::resolved(int n_experts) const {
  if (n_experts < 1) {
    throw std::invalid_argument("RoutingConfig: expert count must be >= 1");
  }
  RoutingConfig cfg = *this;
  if (cfg.mode == RoutingMode::SimplifiedOea) {
    cfg.p = 1.0;
    cfg.k_max = cfg.k;
    cfg.max_p = n_experts;
  }
  if (cfg.max_p == 0) cfg.max_p = n_experts;
  if (cfg.k < 1 || cfg.k > n_experts) {
    throw std::invalid_argument("RoutingConfig: k must be in [1, N]");
  }
  if (cfg.mode != RoutingMode::Vanilla) {
    if (cfg.k0 < 1 || cfg.k0 > n_experts) {
      throw std::invalid_argument("RoutingConfig: k0 must be in [1, N]");
    }
    if (!(cfg.p > 0.0) || cfg.p > 1.0) {
      throw std::invalid_argument("RoutingConfig: p must be in (0, 1]");
    }
    if (cfg.k_max < cfg.k0 || cfg.k_max > n_experts) {
      throw std::invalid_argument("RoutingConfig: need k0 <= k_max <= N");
    }
    if (cfg.max_p < 1 || cfg.max_p > n_experts) {
      throw std::invalid_argument("RoutingConfig: max_p must be in [1, N]");
    }
  }
  return cfg;
}

SortedExperts sort_experts(const ScoreMatrix& scores) {
  const Eigen::Index b = scores.batch();
  const Eigen::Index n = scores.experts();
  if (b < 1 || n < 1) {
    throw std::invalid_argument("sort_experts: dimensions must be >= 1");
  }
  SortedExperts out;
  out.order.resize(b, n);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < b; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    const double* row = scores.scores.row(i).data();
    std::sort(idx.begin(), idx.end(), [row](int a, int c) {
      if (row[a] != row[c]) return row[a] > row[c];
      return a < c;
    });
    for (Eigen::Index j = 0; j < n; ++j) out.order(i, j) = idx[j];
  }
  return out;
}

RoutingPlan route_topk(const ScoreMatrix& scores, int k) {
  const Eigen::Index n = scores.experts();
  if (k < 1 || k > n) {
    throw std::invalid_argument("route_topk: k must be in [1, N]");
  }
  const SortedExperts sorted = sort_experts(scores);
  const Eigen::Index b = scores.batch();

  RoutingPlan plan;
  plan.n_experts = static_cast<int>(n);
  plan.sets.assign(static_cast<std::size_t>(b), {});
  for (Eigen::Index i = 0; i < b; ++i) {
    if (!scores.is_real(i)) continue;
    auto& set = plan.sets[static_cast<std::size_t>(i)];
    set.assign(sorted.order.row(i).data(), sorted.order.row(i).data() + k);
  }
  renormalize_weights(scores, plan);
  fill_aggregates(plan);
  return plan;
}

Phase1Result phase1_baseline(const ScoreMatrix& scores,
                             const SortedExperts& sorted,
                             const RoutingConfig& raw_cfg) {
  const Eigen::Index b = scores.batch();
  const Eigen::Index n = scores.experts();
  const RoutingConfig cfg = raw_cfg.resolved(static_cast<int>(n));

  Phase1Result res;
  res.t = Eigen::VectorXi::Zero(b);
  res.n = Eigen::VectorXi::Zero(b);
  res.base_sets.assign(static_cast<std::size_t>(b), {});

  std::vector<bool> in_union(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < b; ++i) {
    if (!scores.is_real(i)) continue;

    int t_i;
    if (cfg.p == 1.0) {
      // Exact full mass: the whole row, immune to cumulative-sum round-off.
      t_i = static_cast<int>(n);
    } else {
      t_i = static_cast<int>(n);
      double cum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        cum += scores.scores(i, sorted.order(i, j));
        if (cum >= cfg.p) {
          t_i = static_cast<int>(j) + 1;
          break;
        }
      }
    }
    const int n_i = std::min(cfg.k0, t_i);
    res.t[i] = t_i;
    res.n[i] = n_i;
    auto& set = res.base_sets[static_cast<std::size_t>(i)];
    set.assign(sorted.order.row(i).data(), sorted.order.row(i).data() + n_i);
    for (int e : set) in_union[static_cast<std::size_t>(e)] = true;
  }
  for (int e = 0; e < static_cast<int>(n); ++e) {
    if (in_union[static_cast<std::size_t>(e)]) res.base_union.push_back(e);
  }
  return res;
}

RoutingPlan phase2_piggyback(const ScoreMatrix& scores,
                             const SortedExperts& sorted,
                             const Phase1Result& phase1,
                             const RoutingConfig& raw_cfg) {
  const Eigen::Index b = scores.batch();
  const Eigen::Index n = scores.experts();
  const RoutingConfig cfg = raw_cfg.resolved(static_cast<int>(n));

  std::vector<bool> in_base(static_cast<std::size_t>(n), false);
  for (int e : phase1.base_union) in_base[static_cast<std::size_t>(e)] = true;

  RoutingPlan plan;
  plan.n_experts = static_cast<int>(n);
  plan.sets.assign(static_cast<std::size_t>(b), {});
  for (Eigen::Index i = 0; i < b; ++i) {
    if (!scores.is_real(i)) continue;
    auto& set = plan.sets[static_cast<std::size_t>(i)];
    set = phase1.base_sets[static_cast<std::size_t>(i)];

    // Candidate ranks are n_i+1 .. max_p (1-based), all distinct experts,
    // so membership in the growing set never needs rechecking.
    for (int j = phase1.n[i]; j < cfg.max_p; ++j) {
      if (cfg.cap == CapSemantics::ExactCap) {
        if (static_cast<int>(set.size()) >= cfg.k_max) break;
      } else {
        if (static_cast<int>(set.size()) > cfg.k_max) break;
      }
      const int e = sorted.order(i, j);
      if (in_base[static_cast<std::size_t>(e)]) set.push_back(e);
    }
  }
  fill_aggregates(plan);
  return plan;
}

RoutingPlan route(const ScoreMatrix& scores, const RoutingConfig& raw_cfg) {
  const Eigen::Index n = scores.experts();
  const RoutingConfig cfg = raw_cfg.resolved(static_cast<int>(n));

  if (cfg.mode == RoutingMode::Vanilla) {
    return route_topk(scores, cfg.k);
  }

  const SortedExperts sorted = sort_experts(scores);
  const Phase1Result phase1 = phase1_baseline(scores, sorted, cfg);

  RoutingPlan plan;
  if (cfg.mode == RoutingMode::Pruned) {
    plan.n_experts = static_cast<int>(n);
    plan.sets = phase1.base_sets;
    fill_aggregates(plan);
  } else {
    plan = phase2_piggyback(scores, sorted, phase1, cfg);
  }
  renormalize_weights(scores, plan);
  return plan;
}

BatchStats batch_stats(const RoutingPlan& plan) {
  BatchStats stats;
  stats.loads = Eigen::VectorXi::Zero(plan.n_experts);
  for (const auto& set : plan.sets) {
    for (int e : set) ++stats.loads[e];
    stats.total_load += static_cast<long>(set.size());
  }
  stats.active_count =
      static_cast<int>((stats.loads.array() > 0).count());
  return stats;
}

}  // namespace oea

// SPDX-License-Identifier: Apache-2.0

#include "oea/score_gen.hpp"

#include <cmath>
#include <stdexcept>

#include "oea/io.hpp"
#include "oea/rng.hpp"

namespace oea {

namespace {

constexpr std::uint64_t kDirichletTag = 201;
constexpr std::uint64_t kTemplateTag = 202;
constexpr std::uint64_t kNoiseTag = 203;

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::RowVectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

}  // namespace

std::string to_string(GenKind kind) {
  switch (kind) {
    case GenKind::Dirichlet:
      return "dirichlet";
    case GenKind::Clustered:
      return "clustered";
    case GenKind::Replay:
      return "replay";
  }
  throw std::invalid_argument("to_string: bad GenKind");
}

GenKind gen_kind_from_string(const std::string& s) {
  if (s == "dirichlet") return GenKind::Dirichlet;
  if (s == "clustered") return GenKind::Clustered;
  if (s == "replay") return GenKind::Replay;
  throw std::invalid_argument("unknown score generator '" + s + "'");
}

void ScoreGenConfig::validate() const {
  if (steps < 1 || layers < 1) {
    throw std::invalid_argument("score gen: steps and layers must be >= 1");
  }
  if (kind == GenKind::Replay) {
    if (trace_path.empty()) {
      throw std::invalid_argument("score gen: replay requires a trace path");
    }
    return;
  }
  if (n_experts < 1 || batch < 1) {
    throw std::invalid_argument(
        "score gen: n_experts and batch must be >= 1");
  }
  if (kind == GenKind::Dirichlet && !(alpha > 0.0)) {
    throw std::invalid_argument("score gen: alpha must be > 0");
  }
  if (kind == GenKind::Clustered) {
    if (groups < 1 || groups > n_experts) {
      throw std::invalid_argument(
          "score gen: groups must be in [1, n_experts]");
    }
    if (!(within_group_concentration > 0.0)) {
      throw std::invalid_argument(
          "score gen: within_group_concentration must be > 0");
    }
    if (between_group_spread < 0.0) {
      throw std::invalid_argument(
          "score gen: between_group_spread must be >= 0");
    }
  }
}

ScoreSource::ScoreSource(ScoreGenConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.kind != GenKind::Replay) {
    return;
  }
  auto records = read_score_trace(cfg_.trace_path);
  if (records.empty()) {
    throw std::invalid_argument("score gen: empty trace " + cfg_.trace_path);
  }
  cfg_.n_experts = records.front().scores.experts();
  cfg_.batch = records.front().scores.batch();
  for (auto& rec : records) {
    const auto key = std::make_pair(rec.step, rec.layer);
    if (!replay_.emplace(key, std::move(rec.scores)).second) {
      throw std::invalid_argument(
          "score gen: duplicate record for step " + std::to_string(rec.step) +
          " layer " + std::to_string(rec.layer) + " in " + cfg_.trace_path);
    }
  }
}

ScoreMatrix ScoreSource::scores(int step, int layer) const {
  if (step < 0 || step >= cfg_.steps || layer < 0 || layer >= cfg_.layers) {
    throw std::invalid_argument("score source: step/layer out of range");
  }
  if (cfg_.kind == GenKind::Replay) {
    const auto it = replay_.find(std::make_pair(step, layer));
    if (it == replay_.end()) {
      throw std::invalid_argument(
          "score source: trace has no record for step " +
          std::to_string(step) + " layer " + std::to_string(layer));
    }
    return it->second;
  }

  const int n = cfg_.n_experts;
  const int b = cfg_.batch;
  ScoreMatrix out;
  out.scores.resize(b, n);

  if (cfg_.kind == GenKind::Dirichlet) {
    for (int i = 0; i < b; ++i) {
      CounterRng rng(cfg_.seed, static_cast<std::uint64_t>(step),
                     static_cast<std::uint64_t>(layer),
                     static_cast<std::uint64_t>(i), kDirichletTag);
      double sum = 0.0;
      for (int e = 0; e < n; ++e) {
        const double g = rng.next_gamma(cfg_.alpha);
        out.scores(i, e) = g;
        sum += g;
      }
      out.scores.row(i) /= sum;
    }
    return out;
  }

  // Clustered: group templates are keyed by (seed, step, layer, group) so
  // they are shared by every token in the group regardless of batch size.
  RowMatrixXd templates(cfg_.groups, n);
  for (int g = 0; g < cfg_.groups; ++g) {
    CounterRng rng(cfg_.seed, static_cast<std::uint64_t>(step),
                   static_cast<std::uint64_t>(layer),
                   static_cast<std::uint64_t>(g), kTemplateTag);
    for (int e = 0; e < n; ++e) {
      templates(g, e) = rng.next_normal();
    }
  }
  const double s = cfg_.between_group_spread;
  const double c = cfg_.within_group_concentration;
  for (int i = 0; i < b; ++i) {
    CounterRng rng(cfg_.seed, static_cast<std::uint64_t>(step),
                   static_cast<std::uint64_t>(layer),
                   static_cast<std::uint64_t>(i), kNoiseTag);
    Eigen::RowVectorXd logits(n);
    const int g = i % cfg_.groups;
    for (int e = 0; e < n; ++e) {
      logits(e) = s * (templates(g, e) + rng.next_normal() / c);
    }
    out.scores.row(i) = softmax_row(logits);
  }
  return out;
}

ScoreMatrix gen_scores(const ScoreGenConfig& cfg, int step, int layer) {
  return ScoreSource(cfg).scores(step, layer);
}

}  // namespace oea

// SPDX-License-Identifier: Apache-2.0
//
// A small deterministic MoE layer: softmax router plus SwiGLU experts.
// It exists to evaluate the selected-set mixture under arbitrary routing
// plans and to quantify how far a rerouted output drifts from the vanilla
// one. Weight storage is templated on scalar; the mixture itself is always
// accumulated in double so divergence measurements are not dominated by
// storage-precision noise.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "oea/rng.hpp"
#include "oea/routing.hpp"

namespace oea {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                  Eigen::RowMajor>;

/// SwiGLU feed-forward expert: three matrices, w_down(silu(x w_gate) * (x w_up)).
template <typename Scalar>
struct ExpertParams {
  DenseMatrix<Scalar> w_gate;  // D x H
  DenseMatrix<Scalar> w_up;    // D x H
  DenseMatrix<Scalar> w_down;  // H x D
};

struct LayerDims {
  int embed = 64;    // D
  int hidden = 96;   // H
  int experts = 16;  // N
};

inline constexpr int kDefaultToyTopK = 4;

template <typename Scalar>
struct MoeLayerParams {
  DenseMatrix<Scalar> router;  // D x N
  std::vector<ExpertParams<Scalar>> experts;

  int embed_dim() const { return static_cast<int>(router.rows()); }
  int expert_count() const { return static_cast<int>(router.cols()); }
  int hidden_dim() const {
    return experts.empty() ? 0 : static_cast<int>(experts[0].w_gate.cols());
  }
};

struct TokenBatch {
  RowMatrixXd embeddings;  // B x D
};

struct Divergence {
  double mean_relative_error = 0.0;
  double max_relative_error = 0.0;
};

template <typename T>
T silu(T z) {
  return z / (T(1) + std::exp(-z));
}

/// Softmax of x * router per token; rows land on the simplex.
template <typename Scalar>
ScoreMatrix router_scores(const MoeLayerParams<Scalar>& layer,
                          const TokenBatch& batch) {
  if (batch.embeddings.cols() != layer.router.rows()) {
    throw std::invalid_argument("router_scores: embedding dim " +
                                std::to_string(batch.embeddings.cols()) +
                                " does not match router rows " +
                                std::to_string(layer.router.rows()));
  }
  RowMatrixXd logits =
      batch.embeddings * layer.router.template cast<double>();
  ScoreMatrix out;
  out.scores.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    out.scores.row(i) = e / e.sum();
  }
  return out;
}

template <typename Scalar>
Eigen::RowVectorXd expert_forward(const ExpertParams<Scalar>& expert,
                                  const Eigen::RowVectorXd& x) {
  if (x.cols() != expert.w_gate.rows() || x.cols() != expert.w_up.rows() ||
      expert.w_gate.cols() != expert.w_down.rows() ||
      expert.w_down.cols() != x.cols()) {
    throw std::invalid_argument("expert_forward: dimension mismatch");
  }
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const RowVec xs = x.cast<Scalar>();
  const RowVec g = xs * expert.w_gate;
  const RowVec u = xs * expert.w_up;
  const RowVec h =
      g.array().unaryExpr([](Scalar z) { return silu(z); }) * u.array();
  return (h * expert.w_down).template cast<double>();
}

/// Mixture over each token's selected set, weights as given by the plan,
/// accumulated in double in the plan's set order. Masked tokens (empty sets,
/// or `mask` when provided) yield zero rows. Throws std::invalid_argument
/// when the plan does not match the layer/batch or an unmasked token has an
/// empty selected set.
template <typename Scalar>
RowMatrixXd moe_forward(const MoeLayerParams<Scalar>& layer,
                        const TokenBatch& batch, const RoutingPlan& plan,
                        const MaskArray* mask = nullptr) {
  const Eigen::Index b = batch.embeddings.rows();
  if (plan.n_experts != layer.expert_count()) {
    throw std::invalid_argument("moe_forward: plan expert count mismatch");
  }
  if (static_cast<Eigen::Index>(plan.sets.size()) != b ||
      plan.weights.size() != plan.sets.size()) {
    throw std::invalid_argument("moe_forward: plan batch size mismatch");
  }
  if (mask != nullptr && mask->size() != b) {
    throw std::invalid_argument("moe_forward: mask size mismatch");
  }
  RowMatrixXd out = RowMatrixXd::Zero(b, batch.embeddings.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& set = plan.sets[static_cast<std::size_t>(i)];
    const auto& w = plan.weights[static_cast<std::size_t>(i)];
    const bool real = mask == nullptr || (*mask)(i);
    if (set.empty()) {
      if (real && mask != nullptr) {
        throw std::invalid_argument(
            "moe_forward: empty selected set for unmasked token " +
            std::to_string(i));
      }
      continue;
    }
    if (w.size() != set.size()) {
      throw std::invalid_argument(
          "moe_forward: weights/set size mismatch for token " +
          std::to_string(i));
    }
    const Eigen::RowVectorXd x = batch.embeddings.row(i);
    for (std::size_t j = 0; j < set.size(); ++j) {
      const int e = set[j];
      if (e < 0 || e >= layer.expert_count()) {
        throw std::invalid_argument("moe_forward: expert index out of range");
      }
      out.row(i) += w[j] * expert_forward(
                               layer.experts[static_cast<std::size_t>(e)], x);
    }
  }
  return out;
}

/// Per-token relative error ||ref - test|| / max(||ref||, 1e-12), aggregated
/// as mean and max over tokens.
Divergence output_divergence(const RowMatrixXd& ref, const RowMatrixXd& test);

/// Synthetic layer with i.i.d. zero-mean normal entries: router and the two
/// input-side expert matrices at scale 1/sqrt(D), the output projection at
/// 1/sqrt(H). Fully determined by (dims, seed).
MoeLayerParams<double> make_random_layer(const LayerDims& dims,
                                         std::uint64_t seed);

/// Standard-normal embeddings keyed per (seed, step, layer, token).
TokenBatch make_random_batch(int batch, int embed_dim, std::uint64_t seed,
                             int step = 0, int layer = 0);

/// JSON serialization: shape header plus row-major values, so traces are
/// replayable bit-for-bit through nlohmann's round-trip number formatting.
void save_layer_json(const std::string& path,
                     const MoeLayerParams<double>& layer);
MoeLayerParams<double> load_layer_json(const std::string& path);

}  // namespace oea

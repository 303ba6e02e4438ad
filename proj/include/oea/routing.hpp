// SPDX-License-Identifier: Apache-2.0
//
// Batch-aware MoE routing: vanilla top-k, (k0, p) baseline pruning, and
// opportunistic piggybacking onto experts already activated by the batch.
//
// All operations are pure functions of their inputs and deterministic,
// including tie handling (equal scores are broken by ascending expert index).

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace oea {

using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXi =
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// One router-score row per token, each row on the probability simplex.
/// An empty mask means every row is a real token; otherwise mask[i] == false
/// marks row i as padding, to be excluded from routing and batch aggregates.
struct ScoreMatrix {
  RowMatrixXd scores;  // B x N, nonnegative
  MaskArray mask;      // size 0 or B

  Eigen::Index batch() const { return scores.rows(); }
  Eigen::Index experts() const { return scores.cols(); }
  bool is_real(Eigen::Index i) const { return mask.size() == 0 || mask[i]; }
  Eigen::Index real_count() const {
    return mask.size() == 0 ? scores.rows() : mask.count();
  }

  /// Throws std::invalid_argument naming the offending row when dimensions
  /// are zero, the mask length mismatches, a score is negative/non-finite,
  /// or an unmasked row is off the simplex by more than 1e-6.
  void validate() const;
};

enum class RoutingMode { Vanilla, Pruned, Oea, SimplifiedOea };

/// ExactCap never lets a token exceed k_max experts. PseudocodeStrict checks
/// the cap only before each candidate, so a token may end at k_max + 1.
enum class CapSemantics { ExactCap, PseudocodeStrict };

const char* to_string(RoutingMode mode);
const char* to_string(CapSemantics cap);
RoutingMode routing_mode_from_string(const std::string& s);
CapSemantics cap_semantics_from_string(const std::string& s);

struct RoutingConfig {
  RoutingMode mode = RoutingMode::Vanilla;
  int k = 8;       // model default experts per token; route count in Vanilla
  int k0 = 8;      // baseline size cap (Phase 1)
  double p = 1.0;  // cumulative-mass threshold (Phase 1), in (0, 1]
  int k_max = 8;   // per-token expert cap (Phase 2)
  int max_p = 0;   // deepest rank scanned in Phase 2; 0 means "all N"
  CapSemantics cap = CapSemantics::ExactCap;

  static RoutingConfig vanilla(int k);
  static RoutingConfig pruned(int k0, double p, int k);
  static RoutingConfig oea(int k0, double p, int k_max, int max_p, int k,
                           CapSemantics cap = CapSemantics::ExactCap);
  static RoutingConfig simplified(int k0, int k,
                                  CapSemantics cap = CapSemantics::ExactCap);

  /// Applies mode constraints (SimplifiedOea forces p = 1, max_p = N,
  /// k_max = k), resolves the max_p = 0 sentinel to N, and validates all
  /// bounds against the expert count. Throws std::invalid_argument.
  RoutingConfig resolved(int n_experts) const;
};

/// Per-token permutation of expert indices, descending by score, ties broken
/// by ascending expert index.
struct SortedExperts {
  RowMatrixXi order;  // B x N
};

/// Phase 1 output: per-token baseline sets and their batch union.
struct Phase1Result {
  Eigen::VectorXi t;  // minimum rank count reaching cumulative mass p
  Eigen::VectorXi n;  // baseline size, min(k0, t); 0 for masked rows
  std::vector<std::vector<int>> base_sets;  // rank order, size n[i]
  std::vector<int> base_union;              // sorted, unmasked rows only
};

/// Final routing decision for a batch. Sets are stored in descending-score
/// order; weights align with sets and sum to 1 per unmasked token. Masked
/// rows carry empty sets and weights.
struct RoutingPlan {
  std::vector<std::vector<int>> sets;
  std::vector<std::vector<double>> weights;
  std::vector<int> active_union;  // sorted expert indices with load > 0
  int active_count = 0;           // |active_union|, aka T
  Eigen::VectorXi loads;          // per-expert token counts, size N
  long total_load = 0;            // sum of loads == sum of |S_i|
  int n_experts = 0;
};

struct BatchStats {
  int active_count = 0;
  Eigen::VectorXi loads;
  long total_load = 0;
};

/// Sorts every row's expert indices by descending score (ascending index on
/// ties). Throws std::invalid_argument on zero-sized input.
SortedExperts sort_experts(const ScoreMatrix& scores);

/// Vanilla top-k routing with weights renormalized over the selected set.
RoutingPlan route_topk(const ScoreMatrix& scores, int k);

/// Phase 1: per-token baseline experts under the (k0, p) heuristic.
/// p = 1 short-circuits to t_i = N so no floating-point accumulation can
/// miss the full mass. Masked rows get t = n = 0 and an empty set.
Phase1Result phase1_baseline(const ScoreMatrix& scores,
                             const SortedExperts& sorted,
                             const RoutingConfig& cfg);

/// Phase 2: scans each token's ranks n_i+1..max_p in descending-score order
/// and piggybacks onto experts already in the baseline union. Never activates
/// an expert outside the union. Weights are left empty.
RoutingPlan phase2_piggyback(const ScoreMatrix& scores,
                             const SortedExperts& sorted,
                             const Phase1Result& phase1,
                             const RoutingConfig& cfg);

/// Dispatch by mode (Vanilla / Pruned / Oea / SimplifiedOea), then
/// renormalize the original scores over each selected set. Throws
/// std::domain_error if a token's selected mass is <= 1e-12, which signals
/// malformed scores.
RoutingPlan route(const ScoreMatrix& scores, const RoutingConfig& cfg);

/// Recomputes per-expert loads, the active-expert count T and the total load
/// from a plan's sets.
BatchStats batch_stats(const RoutingPlan& plan);

}  // namespace oea

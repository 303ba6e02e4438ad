// SPDX-License-Identifier: Apache-2.0
//
// Synthetic router-score generation for the decode simulator. Every row is
// keyed by (seed, step, layer, token) through the counter RNG, so a given
// token's scores do not depend on batch size, evaluation order, or thread
// count. That keying is what makes the padding experiments exact: the real
// rows of a padded batch are bitwise identical to the unpadded ones.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "oea/routing.hpp"

namespace oea {

enum class GenKind {
  Dirichlet,  // i.i.d. symmetric Dirichlet(alpha) rows
  Clustered,  // tokens share per-group logit templates
  Replay,     // rows read back from a recorded score trace
};

std::string to_string(GenKind kind);
GenKind gen_kind_from_string(const std::string& s);

struct ScoreGenConfig {
  GenKind kind = GenKind::Dirichlet;
  int n_experts = 128;
  int batch = 16;
  int steps = 1;
  int layers = 1;
  std::uint64_t seed = 0;

  // Dirichlet
  double alpha = 1.0;

  // Clustered: token i in group (i % groups) gets logits
  //   spread * (template_g + noise_i / concentration)
  // softmaxed per row. spread = 0 collapses every row to the uniform
  // distribution; concentration -> inf collapses a group onto its template.
  int groups = 2;
  double within_group_concentration = 4.0;
  double between_group_spread = 2.0;

  // Replay
  std::string trace_path;

  void validate() const;
};

/// Materializes score batches per (step, layer). Replay traces are loaded
/// once at construction; generated kinds are recomputed on demand.
class ScoreSource {
 public:
  explicit ScoreSource(ScoreGenConfig cfg);

  ScoreMatrix scores(int step, int layer) const;
  const ScoreGenConfig& config() const { return cfg_; }

 private:
  ScoreGenConfig cfg_;
  std::map<std::pair<int, int>, ScoreMatrix> replay_;
};

/// One-shot convenience wrapper around ScoreSource.
ScoreMatrix gen_scores(const ScoreGenConfig& cfg, int step, int layer);

}  // namespace oea

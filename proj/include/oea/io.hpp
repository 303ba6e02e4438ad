// SPDX-License-Identifier: Apache-2.0
//
// Versioned on-disk formats. Score traces are newline-delimited JSON with a
// header record, so they can be streamed, diffed, and replayed exactly
// (nlohmann round-trips doubles). Latency observations are a two-column CSV
// addressed by header name.

#pragma once

#include <string>
#include <vector>

#include "oea/latency.hpp"
#include "oea/routing.hpp"

namespace oea {

inline constexpr int kScoreTraceSchemaVersion = 1;

struct ScoreRecord {
  int step = 0;
  int layer = 0;
  ScoreMatrix scores;
};

void write_score_trace(const std::string& path,
                       const std::vector<ScoreRecord>& records);

/// Parses and validates a trace; errors name the offending record and row.
std::vector<ScoreRecord> read_score_trace(const std::string& path);

void write_latency_csv(const std::string& path,
                       const std::vector<LatencyObservation>& obs);

/// Columns "T" and "latency_us" are located by header name; extra columns
/// are ignored.
std::vector<LatencyObservation> read_latency_csv(const std::string& path);

/// Round-trip-exact formatting for report CSVs ("%.17g").
std::string format_double(double v);

}  // namespace oea

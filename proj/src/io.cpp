// SPDX-License-Identifier: Apache-2.0

#include "oea/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace oea {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string()
                                         : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_score_trace(const std::string& path,
                       const std::vector<ScoreRecord>& records) {
  if (records.empty()) {
    throw std::invalid_argument("write_score_trace: no records");
  }
  const int n = records.front().scores.experts();
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("write_score_trace: cannot open " + path);
  }
  nlohmann::json header;
  header["schema_version"] = kScoreTraceSchemaVersion;
  header["type"] = "score_trace";
  header["n_experts"] = n;
  out << header.dump() << "\n";
  for (const auto& rec : records) {
    if (rec.scores.experts() != n) {
      throw std::invalid_argument(
          "write_score_trace: inconsistent expert count at step " +
          std::to_string(rec.step));
    }
    nlohmann::json j;
    j["step"] = rec.step;
    j["layer"] = rec.layer;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rec.scores.scores.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index e = 0; e < rec.scores.scores.cols(); ++e) {
        row.push_back(rec.scores.scores(i, e));
      }
      rows.push_back(std::move(row));
    }
    j["scores"] = std::move(rows);
    if (rec.scores.mask.size() > 0) {
      nlohmann::json mask = nlohmann::json::array();
      for (Eigen::Index i = 0; i < rec.scores.mask.size(); ++i) {
        mask.push_back(static_cast<bool>(rec.scores.mask(i)));
      }
      j["mask"] = std::move(mask);
    }
    out << j.dump() << "\n";
  }
}

std::vector<ScoreRecord> read_score_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("read_score_trace: cannot open " + path);
  }
  std::vector<ScoreRecord> records;
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  int n_experts = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("read_score_trace: " + path + " line " +
                                  std::to_string(line_no) + ": " + e.what());
    }
    if (!saw_header) {
      if (j.value("type", "") != std::string("score_trace") ||
          j.value("schema_version", 0) != kScoreTraceSchemaVersion) {
        throw std::invalid_argument(
            "read_score_trace: " + path +
            " does not start with a score_trace header of schema version " +
            std::to_string(kScoreTraceSchemaVersion));
      }
      n_experts = j.at("n_experts").get<int>();
      if (n_experts < 1) {
        throw std::invalid_argument("read_score_trace: " + path +
                                    ": n_experts must be >= 1");
      }
      saw_header = true;
      continue;
    }
    const std::string where =
        path + " record " + std::to_string(records.size()) + " (line " +
        std::to_string(line_no) + ")";
    ScoreRecord rec;
    try {
      rec.step = j.at("step").get<int>();
      rec.layer = j.at("layer").get<int>();
      const auto& rows = j.at("scores");
      if (!rows.is_array() || rows.empty()) {
        throw std::invalid_argument("scores must be a non-empty array");
      }
      const int b = static_cast<int>(rows.size());
      rec.scores.scores.resize(b, n_experts);
      for (int i = 0; i < b; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != n_experts) {
          throw std::invalid_argument("row " + std::to_string(i) +
                                      " does not have n_experts entries");
        }
        for (int e = 0; e < n_experts; ++e) {
          rec.scores.scores(i, e) = row[static_cast<std::size_t>(e)]
                                        .get<double>();
        }
      }
      if (j.contains("mask")) {
        const auto& mask = j.at("mask");
        if (!mask.is_array() || static_cast<int>(mask.size()) != b) {
          throw std::invalid_argument("mask length does not match batch");
        }
        rec.scores.mask.resize(b);
        for (int i = 0; i < b; ++i) {
          rec.scores.mask(i) = mask[static_cast<std::size_t>(i)].get<bool>();
        }
      }
      rec.scores.validate();
    } catch (const std::exception& e) {
      throw std::invalid_argument("read_score_trace: " + where + ": " +
                                  e.what());
    }
    records.push_back(std::move(rec));
  }
  if (!saw_header) {
    throw std::invalid_argument("read_score_trace: " + path + " is empty");
  }
  if (records.empty()) {
    throw std::invalid_argument("read_score_trace: " + path +
                                " has a header but no records");
  }
  return records;
}

void write_latency_csv(const std::string& path,
                       const std::vector<LatencyObservation>& obs) {
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("write_latency_csv: cannot open " + path);
  }
  out << "T,latency_us\n";
  for (const auto& o : obs) {
    out << o.active_experts << "," << format_double(o.latency_us) << "\n";
  }
}

std::vector<LatencyObservation> read_latency_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("read_latency_csv: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("read_latency_csv: " + path + " is empty");
  }
  const auto header = split_csv_line(line);
  int t_col = -1;
  int lat_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "T") t_col = static_cast<int>(c);
    if (header[c] == "latency_us") lat_col = static_cast<int>(c);
  }
  if (t_col < 0 || lat_col < 0) {
    throw std::invalid_argument(
        "read_latency_csv: " + path +
        " header must contain columns 'T' and 'latency_us'");
  }
  std::vector<LatencyObservation> obs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto fields = split_csv_line(line);
    const std::string where =
        "read_latency_csv: " + path + " line " + std::to_string(line_no);
    if (static_cast<int>(fields.size()) <= std::max(t_col, lat_col)) {
      throw std::invalid_argument(where + ": too few columns");
    }
    try {
      LatencyObservation o;
      o.active_experts = std::stoi(fields[static_cast<std::size_t>(t_col)]);
      o.latency_us = std::stod(fields[static_cast<std::size_t>(lat_col)]);
      if (o.active_experts < 0 || !std::isfinite(o.latency_us)) {
        throw std::invalid_argument("non-finite or negative value");
      }
      obs.push_back(o);
    } catch (const std::exception& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
  }
  if (obs.empty()) {
    throw std::invalid_argument("read_latency_csv: " + path +
                                " has no observations");
  }
  return obs;
}

}  // namespace oea

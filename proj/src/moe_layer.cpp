// SPDX-License-Identifier: Apache-2.0

#include "oea/moe_layer.hpp"

#include <fstream>

#include <json.hpp>

namespace oea {

namespace {

constexpr std::uint64_t kLayerTag = 101;
constexpr std::uint64_t kEmbedTag = 102;

void fill_normal(DenseMatrix<double>& m, CounterRng& rng, double scale) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = scale * rng.next_normal();
    }
  }
}

nlohmann::json matrix_json(const DenseMatrix<double>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

DenseMatrix<double> matrix_from_json(const nlohmann::json& j, int rows,
                                     int cols, const std::string& name) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw std::invalid_argument("load_layer_json: bad row count for " + name);
  }
  DenseMatrix<double> m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw std::invalid_argument("load_layer_json: bad column count for " +
                                  name + " row " + std::to_string(r));
    }
    for (int c = 0; c < cols; ++c) {
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

}  // namespace

Divergence output_divergence(const RowMatrixXd& ref, const RowMatrixXd& test) {
  if (ref.rows() != test.rows() || ref.cols() != test.cols()) {
    throw std::invalid_argument("output_divergence: shape mismatch");
  }
  if (ref.rows() == 0) {
    throw std::invalid_argument("output_divergence: empty input");
  }
  Divergence d;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ref.rows(); ++i) {
    const double denom = std::max(ref.row(i).norm(), 1e-12);
    const double rel = (ref.row(i) - test.row(i)).norm() / denom;
    sum += rel;
    d.max_relative_error = std::max(d.max_relative_error, rel);
  }
  d.mean_relative_error = sum / static_cast<double>(ref.rows());
  return d;
}

MoeLayerParams<double> make_random_layer(const LayerDims& dims,
                                         std::uint64_t seed) {
  if (dims.embed < 1 || dims.hidden < 1 || dims.experts < 1) {
    throw std::invalid_argument("make_random_layer: dims must be positive");
  }
  const double d_scale = 1.0 / std::sqrt(static_cast<double>(dims.embed));
  const double h_scale = 1.0 / std::sqrt(static_cast<double>(dims.hidden));

  MoeLayerParams<double> layer;
  CounterRng rng(stream_key({seed, kLayerTag}));
  layer.router.resize(dims.embed, dims.experts);
  fill_normal(layer.router, rng, d_scale);
  layer.experts.resize(static_cast<std::size_t>(dims.experts));
  for (auto& ex : layer.experts) {
    ex.w_gate.resize(dims.embed, dims.hidden);
    ex.w_up.resize(dims.embed, dims.hidden);
    ex.w_down.resize(dims.hidden, dims.embed);
    fill_normal(ex.w_gate, rng, d_scale);
    fill_normal(ex.w_up, rng, d_scale);
    fill_normal(ex.w_down, rng, h_scale);
  }
  return layer;
}

TokenBatch make_random_batch(int batch, int embed_dim, std::uint64_t seed,
                             int step, int layer) {
  if (batch < 1 || embed_dim < 1) {
    throw std::invalid_argument("make_random_batch: dims must be positive");
  }
  TokenBatch out;
  out.embeddings.resize(batch, embed_dim);
  for (int i = 0; i < batch; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(step),
                   static_cast<std::uint64_t>(layer),
                   static_cast<std::uint64_t>(i), kEmbedTag);
    for (int c = 0; c < embed_dim; ++c) {
      out.embeddings(i, c) = rng.next_normal();
    }
  }
  return out;
}

void save_layer_json(const std::string& path,
                     const MoeLayerParams<double>& layer) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["type"] = "moe_layer";
  j["embed_dim"] = layer.embed_dim();
  j["hidden_dim"] = layer.hidden_dim();
  j["n_experts"] = layer.expert_count();
  j["router"] = matrix_json(layer.router);
  nlohmann::json experts = nlohmann::json::array();
  for (const auto& ex : layer.experts) {
    nlohmann::json e;
    e["w_gate"] = matrix_json(ex.w_gate);
    e["w_up"] = matrix_json(ex.w_up);
    e["w_down"] = matrix_json(ex.w_down);
    experts.push_back(std::move(e));
  }
  j["experts"] = std::move(experts);

  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("save_layer_json: cannot open " + path);
  }
  out << j.dump() << "\n";
}

MoeLayerParams<double> load_layer_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("load_layer_json: cannot open " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("load_layer_json: parse error in " + path +
                                ": " + e.what());
  }
  if (j.value("schema_version", 0) != 1 ||
      j.value("type", "") != std::string("moe_layer")) {
    throw std::invalid_argument("load_layer_json: unsupported schema in " +
                                path);
  }
  const int d = j.at("embed_dim").get<int>();
  const int h = j.at("hidden_dim").get<int>();
  const int n = j.at("n_experts").get<int>();
  if (d < 1 || h < 1 || n < 1) {
    throw std::invalid_argument("load_layer_json: non-positive dims in " +
                                path);
  }
  MoeLayerParams<double> layer;
  layer.router = matrix_from_json(j.at("router"), d, n, "router");
  const auto& experts = j.at("experts");
  if (!experts.is_array() || static_cast<int>(experts.size()) != n) {
    throw std::invalid_argument("load_layer_json: expert count mismatch");
  }
  layer.experts.resize(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e) {
    const auto& je = experts[static_cast<std::size_t>(e)];
    const std::string tag = "expert " + std::to_string(e);
    layer.experts[static_cast<std::size_t>(e)].w_gate =
        matrix_from_json(je.at("w_gate"), d, h, tag + " w_gate");
    layer.experts[static_cast<std::size_t>(e)].w_up =
        matrix_from_json(je.at("w_up"), d, h, tag + " w_up");
    layer.experts[static_cast<std::size_t>(e)].w_down =
        matrix_from_json(je.at("w_down"), h, d, tag + " w_down");
  }
  return layer;
}

}  // namespace oea

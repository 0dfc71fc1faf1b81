#include "relcp/gpvar.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "relcp/errors.hpp"
#include "relcp/kernels.hpp"

namespace relcp::gpvar {

std::size_t Graph::edge_count() const { return edges().size(); }

std::vector<std::pair<std::size_t, std::size_t>> Graph::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < nodes(); ++i)
    for (std::size_t j = i + 1; j < nodes(); ++j)
      if (adjacency(i, j) != 0.0) out.emplace_back(i, j);
  return out;
}

bool Graph::is_symmetric() const {
  for (std::size_t i = 0; i < nodes(); ++i)
    for (std::size_t j = 0; j < nodes(); ++j)
      if (adjacency(i, j) != adjacency(j, i)) return false;
  return true;
}

bool Graph::is_connected() const {
  const std::size_t n = nodes();
  if (n == 0) return true;
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j) {
      if (adjacency(i, j) != 0.0 && !seen[j]) {
        seen[j] = true;
        ++visited;
        stack.push_back(j);
      }
    }
  }
  return visited == n;
}

Graph community_graph(std::size_t nodes, std::size_t communities) {
  if (communities < 1) throw std::invalid_argument("community_graph: need at least one community");
  if (nodes == 0 || nodes % communities != 0) {
    throw std::invalid_argument("community_graph: " + std::to_string(communities) +
                                " communities do not divide " + std::to_string(nodes) + " nodes");
  }
  const std::size_t size = nodes / communities;
  Graph g;
  g.adjacency.resize(nodes, nodes);
  for (std::size_t c = 0; c < communities; ++c)
    for (std::size_t i = c * size; i < (c + 1) * size; ++i)
      for (std::size_t j = c * size; j < (c + 1) * size; ++j)
        if (i != j) g.adjacency(i, j) = 1.0;
  if (communities > 1) {
    for (std::size_t c = 0; c < communities; ++c) {
      const std::size_t from = c * size + size - 1;
      const std::size_t to = ((c + 1) % communities) * size;
      if (from != to) g.adjacency(from, to) = g.adjacency(to, from) = 1.0;
    }
  }
  return g;
}

Graph normalize_propagation(Graph graph) {
  const std::size_t n = graph.nodes();
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += graph.adjacency(i, j);
    inv_sqrt[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Matrix<double> p(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p(i, j) = inv_sqrt[i] * graph.adjacency(i, j) * inv_sqrt[j];
  graph.propagation = std::move(p);
  return graph;
}

void GPVARParams::validate() const {
  if (theta.rows() < 1 || theta.cols() < 1) throw ConfigError("GPVAR: theta must be at least 1x1");
  if (!(sigma >= 0.0)) throw ConfigError("GPVAR: sigma must be non-negative");
  for (double v : theta.flat())
    if (!std::isfinite(v)) throw ConfigError("GPVAR: non-finite theta");
  if (!std::isfinite(a) || !std::isfinite(b)) throw ConfigError("GPVAR: non-finite a/b");
}

GPVARParams GPVARParams::benchmark() {
  GPVARParams p;
  p.theta = Matrix<double>{{2.5, -2.0, -0.5}, {1.0, 3.0, 0.0}};
  p.a = 0.5;
  p.b = 0.5;
  p.sigma = 0.4;
  p.propagation = Propagation::binary;
  return p;
}

Simulation simulate(const GPVARParams& params, const Graph& graph, std::size_t steps,
                    std::size_t burn_in, std::uint64_t seed,
                    const std::optional<Matrix<double>>& initial) {
  params.validate();
  if (steps < 1) throw ConfigError("GPVAR: need at least one step");
  const std::size_t n = graph.nodes();
  const std::size_t q_lags = params.lags();
  const std::size_t orders = params.orders();

  Matrix<double> prop;
  if (params.propagation == Propagation::symmetric) {
    prop = graph.propagation ? *graph.propagation : *normalize_propagation(graph).propagation;
  } else {
    prop = graph.adjacency;
  }

  // filters[q] = sum_l theta(q, l) P^l
  std::vector<Matrix<double>> filters(q_lags, Matrix<double>(n, n));
  Matrix<double> power(n, n);
  for (std::size_t i = 0; i < n; ++i) power(i, i) = 1.0;
  for (std::size_t l = 0; l < orders; ++l) {
    for (std::size_t q = 0; q < q_lags; ++q) {
      const double c = params.theta(q, l);
      if (c == 0.0) continue;
      auto dst = filters[q].flat();
      auto src = power.flat();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += c * src[k];
    }
    if (l + 1 < orders) power = kernels::matmul(power, prop);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t total = burn_in + steps;
  const std::size_t rows = std::max(total, q_lags);
  Matrix<double> x(rows, n);
  Matrix<double> det(rows, n, std::numeric_limits<double>::quiet_NaN());
  if (initial) {
    if (initial->rows() != q_lags || initial->cols() != n) {
      throw ConfigError("GPVAR: initial state must be Q x N");
    }
    for (std::size_t t = 0; t < q_lags; ++t)
      for (std::size_t i = 0; i < n; ++i) x(t, i) = (*initial)(t, i);
  } else {
    for (std::size_t t = 0; t < q_lags; ++t)
      for (std::size_t i = 0; i < n; ++i) x(t, i) = params.sigma * noise(rng);
  }

  std::vector<double> h(n);
  for (std::size_t t = q_lags - 1; t + 1 < rows; ++t) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t q = 0; q < q_lags; ++q) {
      const auto lagged = x.row(t + 1 - q_lags + q);
      const auto& f = filters[q];
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += f(i, j) * lagged[j];
        h[i] += acc;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double d = params.a * std::tanh(h[i]) + params.b * std::tanh(x(t, i));
      const double v = d + params.sigma * noise(rng);
      if (!std::isfinite(v)) {
        throw NumericalError("GPVAR: non-finite state at step " + std::to_string(t + 1) +
                             ", node " + std::to_string(i));
      }
      det(t + 1, i) = d;
      x(t + 1, i) = v;
    }
  }

  Matrix<double> kept(steps, n);
  Matrix<double> kept_det(steps, n);
  const std::size_t offset = rows - steps;
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      kept(t, i) = x(offset + t, i);
      kept_det(t, i) = det(offset + t, i);
    }
  return {TimeSeriesCollection(std::move(kept)), std::move(kept_det)};
}

std::string to_string(Propagation p) {
  return p == Propagation::binary ? "binary" : "symmetric";
}

Propagation propagation_from_string(const std::string& s) {
  if (s == "binary") return Propagation::binary;
  if (s == "symmetric") return Propagation::symmetric;
  throw ConfigError("unknown propagation '" + s + "' (expected binary | symmetric)");
}

nlohmann::json sidecar_json(const GPVARParams& params, const Graph& graph, std::size_t steps,
                            std::size_t burn_in, std::uint64_t seed, std::size_t communities) {
  nlohmann::json theta = nlohmann::json::array();
  for (std::size_t q = 0; q < params.lags(); ++q) {
    auto r = params.theta.row(q);
    theta.push_back(std::vector<double>(r.begin(), r.end()));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (auto [i, j] : graph.edges()) edges.push_back({i, j});
  return {{"params",
           {{"theta", theta},
            {"a", params.a},
            {"b", params.b},
            {"sigma", params.sigma},
            {"propagation", to_string(params.propagation)}}},
          {"nodes", graph.nodes()},
          {"communities", communities},
          {"steps", steps},
          {"burn_in", burn_in},
          {"seed", seed},
          {"edges", edges}};
}

GPVARParams params_from_json(const nlohmann::json& j) {
  GPVARParams p = GPVARParams::benchmark();
  if (j.contains("theta")) {
    const auto& rows = j.at("theta");
    if (!rows.is_array() || rows.empty() || !rows[0].is_array()) throw ConfigError("theta must be a matrix");
    Matrix<double> th(rows.size(), rows[0].size());
    for (std::size_t q = 0; q < rows.size(); ++q) {
      if (rows[q].size() != th.cols()) throw ConfigError("theta rows must have equal length");
      for (std::size_t l = 0; l < th.cols(); ++l) th(q, l) = rows[q][l].get<double>();
    }
    p.theta = std::move(th);
  }
  p.a = j.value("a", p.a);
  p.b = j.value("b", p.b);
  p.sigma = j.value("sigma", p.sigma);
  if (j.contains("propagation")) p.propagation = propagation_from_string(j.at("propagation"));
  p.validate();
  return p;
}

}  // namespace relcp::gpvar

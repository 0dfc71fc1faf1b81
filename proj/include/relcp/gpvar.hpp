#pragma once

// Synthetic GPVAR benchmark: community graphs and the polynomial graph-filter
// autoregressive process
//
//   H_t     = sum_q sum_l theta(q, l) * P^l * X_{t-Q+1+q}     q = 0..Q-1, l = 0..L-1
//   X_{t+1} = a * tanh(H_t) + b * tanh(X_t) + eta_t,            eta_t ~ N(0, sigma^2 I)
//
// Row 0 of theta multiplies the oldest lag in the filter memory; P is either
// the binary adjacency or its symmetric normalization.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relcp/core_data.hpp"
#include "relcp/matrix.hpp"

namespace relcp::gpvar {

struct Graph {
  Matrix<double> adjacency;                  // binary, symmetric, zero diagonal
  std::optional<Matrix<double>> propagation;  // set by normalize_propagation

  [[nodiscard]] std::size_t nodes() const noexcept { return adjacency.rows(); }
  [[nodiscard]] std::size_t edge_count() const;  // undirected edges
  [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> edges() const;  // i < j
  [[nodiscard]] bool is_symmetric() const;
  [[nodiscard]] bool is_connected() const;
};

/// C equal cliques of N / C nodes arranged in a ring; consecutive communities
/// are joined by one bridge from the last node of one to the first of the next.
Graph community_graph(std::size_t nodes, std::size_t communities);

/// Sets propagation = D^{-1/2} A D^{-1/2}; isolated nodes map to zero rows.
Graph normalize_propagation(Graph graph);

enum class Propagation { binary, symmetric };

struct GPVARParams {
  Matrix<double> theta;  // Q x L
  double a = 0.5;
  double b = 0.5;
  double sigma = 0.4;
  Propagation propagation = Propagation::binary;

  [[nodiscard]] std::size_t lags() const noexcept { return theta.rows(); }
  [[nodiscard]] std::size_t orders() const noexcept { return theta.cols(); }
  void validate() const;

  /// theta = [[2.5, -2.0, -0.5], [1.0, 3.0, 0.0]], a = b = 0.5, sigma = 0.4.
  static GPVARParams benchmark();
};

struct Simulation {
  TimeSeriesCollection series;
  /// Per step, the noise-free part a*tanh(H) + b*tanh(X) that produced each row
  /// (NaN for initial states that were drawn, not generated).
  Matrix<double> deterministic;
};

/// Runs burn_in + steps updates and keeps the last `steps` rows. The first Q
/// states are drawn i.i.d. N(0, sigma^2) unless `initial` (Q x N) is given.
Simulation simulate(const GPVARParams& params, const Graph& graph, std::size_t steps,
                    std::size_t burn_in, std::uint64_t seed,
                    const std::optional<Matrix<double>>& initial = std::nullopt);

nlohmann::json sidecar_json(const GPVARParams& params, const Graph& graph, std::size_t steps,
                            std::size_t burn_in, std::uint64_t seed, std::size_t communities);
GPVARParams params_from_json(const nlohmann::json& j);
std::string to_string(Propagation p);
Propagation propagation_from_string(const std::string& s);

}  // namespace relcp::gpvar

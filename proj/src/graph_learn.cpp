#include "relcp/graph_learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace relcp::graph {

namespace {

template <typename S>
void check_phi(const Matrix<S>& phi) {
  if (phi.rows() == 0 || phi.cols() < phi.rows()) {
    throw std::invalid_argument("graph: score matrix must be N x (N + D), got " + shape_str(phi));
  }
}

}  // namespace

template <typename S>
Matrix<S> row_softmax(const Matrix<S>& phi) {
  check_phi(phi);
  const std::size_t n = phi.rows();
  const std::size_t m = phi.cols();
  Matrix<S> p(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) mx = std::max(mx, static_cast<double>(phi(i, j)));
    if (!std::isfinite(mx)) continue;  // a single node has no candidates
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) z += std::exp(static_cast<double>(phi(i, j)) - mx);
    for (std::size_t j = 0; j < m; ++j)
      p(i, j) = j == i ? S(0) : static_cast<S>(std::exp(static_cast<double>(phi(i, j)) - mx) / z);
  }
  return p;
}

template <typename S>
SampledGraph<S> gumbel_topk_sample(const Matrix<S>& phi, std::size_t k, std::mt19937_64* rng) {
  check_phi(phi);
  const std::size_t n = phi.rows();
  const std::size_t m = phi.cols();
  if (k < 1 || k > m - 1) {
    throw std::invalid_argument("gumbel_topk_sample: K = " + std::to_string(k) + " outside [1, " +
                                std::to_string(m - 1) + "]");
  }
  SampledGraph<S> g;
  g.hard.resize(n, n);
  g.soft = row_softmax(phi);
  g.selected.resize(n);
  g.backward_mask.assign(n * m, 0);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> key(m);
  std::vector<std::size_t> cand;
  cand.reserve(m);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      double kj = static_cast<double>(phi(i, j));
      if (rng != nullptr) {
        double u = unif(*rng);
        while (u <= 0.0) u = unif(*rng);
        kj -= std::log(-std::log(u));
      }
      key[j] = kj;
      cand.push_back(j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      [&](std::size_t a, std::size_t b) {
                        return key[a] > key[b] || (key[a] == key[b] && a < b);
                      });
    cand.resize(k);
    std::sort(cand.begin(), cand.end());
    for (std::size_t j : cand) {
      g.backward_mask[i * m + j] = 1;
      if (j < n) g.hard(i, j) = S(1);
    }
    g.selected[i] = cand;
  }
  return g;
}

template <typename S>
void sparsify_backward(SampledGraph<S>& sampled, double frac, std::mt19937_64& rng) {
  if (!(frac >= 0.0 && frac <= 1.0)) throw std::invalid_argument("sparsify_backward: frac outside [0, 1]");
  const std::size_t n = sampled.nodes();
  const std::size_t m = sampled.columns();
  if (frac >= 1.0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) sampled.backward_mask[i * m + j] = 1;
    return;
  }
  if (frac <= 0.0) return;
  std::bernoulli_distribution coin(frac);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && sampled.backward_mask[i * m + j] == 0 && coin(rng)) sampled.backward_mask[i * m + j] = 1;
}

template <typename S>
ad::Var<S> straight_through(ad::Var<S> phi, const SampledGraph<S>& sampled) {
  if (phi.rows() != sampled.nodes() || phi.cols() != sampled.columns()) {
    throw std::invalid_argument("straight_through: scores " + shape_str(phi.value()) +
                                " do not match the sampled graph");
  }
  auto soft = std::make_shared<const Matrix<S>>(sampled.soft);
  auto mask = std::make_shared<const std::vector<unsigned char>>(sampled.backward_mask);
  return phi.tape->record(sampled.hard, {phi}, [phi, soft, mask](ad::Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& dphi = t.grad(phi.id);
    const std::size_t n = g.rows();
    const std::size_t m = soft->cols();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>((*soft)(i, j)) * g(i, j);
      for (std::size_t j = 0; j < m; ++j) {
        if ((*mask)[i * m + j] == 0) continue;
        const double gij = j < n ? static_cast<double>(g(i, j)) : 0.0;
        dphi(i, j) += static_cast<S>(static_cast<double>((*soft)(i, j)) * (gij - dot));
      }
    }
  });
}

template <typename S>
Matrix<S> init_scores(std::size_t nodes, std::size_t dummies, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 0.1);
  Matrix<S> phi(nodes, nodes + dummies);
  for (auto& v : phi.flat()) v = static_cast<S>(d(rng));
  return phi;
}

template <typename S>
void write_edge_list(const std::filesystem::path& path, const Matrix<S>& phi, std::size_t k) {
  const auto p = row_softmax(phi);
  const auto top = gumbel_topk_sample(phi, k, nullptr);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "source,target,score,probability,selected\n";
  for (std::size_t i = 0; i < phi.rows(); ++i)
    for (std::size_t j = 0; j < phi.rows(); ++j) {
      if (i == j) continue;
      out << fmt::format("{},{},{},{},{}\n", i, j, static_cast<double>(phi(i, j)),
                         static_cast<double>(p(i, j)), top.hard(i, j) != S(0) ? 1 : 0);
    }
}

#define RELCP_GRAPH_INSTANTIATE(S)                                                         \
  template Matrix<S> row_softmax<S>(const Matrix<S>&);                                     \
  template struct SampledGraph<S>;                                                         \
  template SampledGraph<S> gumbel_topk_sample<S>(const Matrix<S>&, std::size_t,            \
                                                 std::mt19937_64*);                        \
  template void sparsify_backward<S>(SampledGraph<S>&, double, std::mt19937_64&);          \
  template ad::Var<S> straight_through<S>(ad::Var<S>, const SampledGraph<S>&);             \
  template Matrix<S> init_scores<S>(std::size_t, std::size_t, std::mt19937_64&);           \
  template void write_edge_list<S>(const std::filesystem::path&, const Matrix<S>&, std::size_t);

RELCP_GRAPH_INSTANTIATE(float)
RELCP_GRAPH_INSTANTIATE(double)

}  // namespace relcp::graph

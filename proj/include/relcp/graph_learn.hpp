#pragma once

// Latent graph sampling. Row i of the score matrix Phi (N x (N + D)) defines a
// categorical over candidate neighbours (self excluded, D dummy columns). K
// neighbours are drawn without replacement with the Gumbel top-K trick; the
// hard adjacency is used forward and the softmax surrogate backward.

#include <cstddef>
#include <filesystem>
#include <random>
#include <vector>

#include "relcp/autograd.hpp"
#include "relcp/matrix.hpp"

namespace relcp::graph {

/// Row softmax over the candidate columns with the self edge (i, i) masked to -inf.
template <typename S>
Matrix<S> row_softmax(const Matrix<S>& phi);

template <typename S>
struct SampledGraph {
  Matrix<S> hard;                           // N x N binary
  Matrix<S> soft;                           // N x (N + D) softmax probabilities
  std::vector<std::vector<std::size_t>> selected;  // per row, chosen columns incl. dummies
  std::vector<unsigned char> backward_mask;  // N x (N + D), row-major; 1 = gradient flows

  [[nodiscard]] std::size_t nodes() const noexcept { return hard.rows(); }
  [[nodiscard]] std::size_t columns() const noexcept { return soft.cols(); }
  [[nodiscard]] bool masked(std::size_t i, std::size_t j) const {
    return backward_mask[i * columns() + j] != 0;
  }
};

/// Draws K columns per row without replacement by perturbing the scores with
/// Gumbel(0, 1) noise. With `rng == nullptr` the draw is the deterministic
/// top-K of the scores (ties to the lowest column). Dummy picks are dropped
/// from the hard adjacency. The backward mask holds the selected columns only.
template <typename S>
SampledGraph<S> gumbel_topk_sample(const Matrix<S>& phi, std::size_t k, std::mt19937_64* rng);

/// Adds a uniformly drawn `frac` share of the non-selected, non-dummy, non-self
/// entries of each row to the backward mask.
template <typename S>
void sparsify_backward(SampledGraph<S>& sampled, double frac, std::mt19937_64& rng);

/// Straight-through adjacency: forward value is sampled.hard; backward treats
/// the output as the softmax P(Phi) restricted to the backward mask:
///   dPhi_ij = mask_ij * P_ij * (g_ij - sum_k P_ik g_ik)   (g = 0 on dummy columns)
template <typename S>
ad::Var<S> straight_through(ad::Var<S> phi, const SampledGraph<S>& sampled);

/// Phi initialised i.i.d. N(0, 0.1^2).
template <typename S>
Matrix<S> init_scores(std::size_t nodes, std::size_t dummies, std::mt19937_64& rng);

/// CSV with one row per ordered non-self node pair:
/// source,target,score,probability,selected (selected = deterministic top-K).
template <typename S>
void write_edge_list(const std::filesystem::path& path, const Matrix<S>& phi, std::size_t k);

}  // namespace relcp::graph

#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Nodes are stored in
// creation order, so running the backward closures in reverse order visits
// each node after all of its consumers. Parameters live outside the tape and
// receive accumulated gradients when backward() reaches their leaf node.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "relcp/matrix.hpp"

namespace relcp::ad {

template <typename S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Matrix<S> v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(S(0)); }
};

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Matrix<S>& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
};

template <typename S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> constant(Matrix<S> value);
  Var<S> param(Parameter<S>& p);

  /// Records a derived node. `backward` is skipped when no parent needs a gradient.
  Var<S> record(Matrix<S> value, std::initializer_list<Var<S>> parents, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates to all parameters.
  void backward(Var<S> loss);

  [[nodiscard]] const Matrix<S>& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of a node, allocated lazily.
  Matrix<S>& grad(std::size_t id);
  [[nodiscard]] const Matrix<S>& grad_of(Var<S> v) const { return nodes_[v.id].grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<S> value;
    Matrix<S> grad;
    bool needs_grad = false;
    Parameter<S>* param = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

template <typename S>
const Matrix<S>& Var<S>::value() const {
  return tape->value(id);
}

// ---------------------------------------------------------------- operations

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b);
template <typename S>
Var<S> add(Var<S> a, Var<S> b);
template <typename S>
Var<S> sub(Var<S> a, Var<S> b);
template <typename S>
Var<S> mul(Var<S> a, Var<S> b);
/// a + bias, bias is 1 x cols broadcast over rows.
template <typename S>
Var<S> add_row(Var<S> a, Var<S> bias);
template <typename S>
Var<S> scale(Var<S> a, S factor);
/// 1 - a
template <typename S>
Var<S> one_minus(Var<S> a);
template <typename S>
Var<S> sigmoid(Var<S> a);
template <typename S>
Var<S> tanh(Var<S> a);
template <typename S>
Var<S> relu(Var<S> a);
template <typename S>
Var<S> concat_cols(std::span<const Var<S>> parts);
template <typename S>
Var<S> concat_cols(std::initializer_list<Var<S>> parts) {
  std::vector<Var<S>> v(parts);
  return concat_cols<S>(std::span<const Var<S>>(v));
}
template <typename S>
Var<S> slice_cols(Var<S> a, std::size_t begin, std::size_t end);
/// out[r] = a[index[r]]; backward scatter-adds.
template <typename S>
Var<S> gather_rows(Var<S> a, std::vector<std::size_t> index);
/// out[i, :] = a[i, :] * factors[i]
template <typename S>
Var<S> scale_rows(Var<S> a, std::vector<S> factors);
/// h holds `batch` stacked blocks of adj.cols() rows; out_b = adj * h_b.
template <typename S>
Var<S> batched_left_matmul(Var<S> adj, Var<S> h, std::size_t batch);

/// Mean absolute error between pred and target (same shape) -> 1x1.
template <typename S>
Var<S> mae_loss(Var<S> pred, const Matrix<S>& target);
/// Mean over rows and levels of the pinball loss; pred: R x L, target: R x 1.
template <typename S>
Var<S> pinball_loss(Var<S> pred, const Matrix<S>& target, std::span<const double> levels);

}  // namespace relcp::ad

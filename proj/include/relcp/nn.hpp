#pragma once

// Layers and optimizer shared by the point forecasters and the quantile network.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcp/autograd.hpp"

namespace relcp::nn {

using ad::Parameter;
using ad::Tape;
using ad::Var;

/// Owns named parameters with stable addresses.
template <typename S>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& o) { *this = o; }
  ParameterSet& operator=(const ParameterSet& o) {
    if (this == &o) return *this;
    params_.clear();
    for (const auto& p : o.params_) params_.push_back(std::make_unique<Parameter<S>>(*p));
    return *this;
  }
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<S>& add(std::string name, Matrix<S> value) {
    if (find(name) != nullptr) throw std::logic_error("duplicate parameter " + name);
    params_.push_back(std::make_unique<Parameter<S>>(std::move(name), std::move(value)));
    return *params_.back();
  }
  Parameter<S>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter<S>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  Parameter<S>& at(const std::string& name) {
    auto* p = find(name);
    if (p == nullptr) throw std::out_of_range("no parameter " + name);
    return *p;
  }
  const Parameter<S>& at(const std::string& name) const {
    const auto* p = find(name);
    if (p == nullptr) throw std::out_of_range("no parameter " + name);
    return *p;
  }
  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }
  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  template <typename T>
  [[nodiscard]] ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (const auto& p : params_) {
      auto& q = out.add(p->name, p->value.template cast<T>());
      q.frozen = p->frozen;
    }
    return out;
  }

  /// FNV-1a over names, shapes and the raw bytes of every value.
  [[nodiscard]] std::uint64_t hash() const;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Overwrites values of existing parameters; shapes must match.
  void load_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, as is usual for linear and recurrent layers.
template <typename S>
Matrix<S> uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<S> m(rows, cols);
  for (auto& v : m.flat()) v = static_cast<S>(dist(rng));
  return m;
}

/// y = x W + b
template <typename S>
struct Linear {
  Parameter<S>* weight = nullptr;
  Parameter<S>* bias = nullptr;

  static Linear create(ParameterSet<S>& ps, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng) {
    Linear l;
    l.weight = &ps.add(name + ".weight", uniform_init<S>(in, out, in, rng));
    l.bias = &ps.add(name + ".bias", uniform_init<S>(1, out, in, rng));
    return l;
  }
  static Linear bind(ParameterSet<S>& ps, const std::string& name) {
    return {&ps.at(name + ".weight"), &ps.at(name + ".bias")};
  }
  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return ad::add_row(ad::matmul(x, t.param(*weight)), t.param(*bias));
  }
  [[nodiscard]] std::size_t in() const { return weight->value.rows(); }
  [[nodiscard]] std::size_t out() const { return weight->value.cols(); }
};

/// Gated recurrent unit with gates ordered (reset, update, candidate):
///   r = sig(x Wxr + bxr + h Whr + bhr)
///   z = sig(x Wxz + bxz + h Whz + bhz)
///   n = tanh(x Wxn + bxn + r * (h Whn + bhn))
///   h' = (1 - z) * n + z * h
template <typename S>
struct GRUCell {
  Linear<S> input;   // in -> 3H
  Linear<S> hidden;  // H -> 3H
  std::size_t hidden_size = 0;

  static GRUCell create(ParameterSet<S>& ps, const std::string& name, std::size_t in,
                        std::size_t hidden_size, std::mt19937_64& rng) {
    GRUCell c;
    c.hidden_size = hidden_size;
    c.input.weight = &ps.add(name + ".w_x", uniform_init<S>(in, 3 * hidden_size, hidden_size, rng));
    c.input.bias = &ps.add(name + ".b_x", uniform_init<S>(1, 3 * hidden_size, hidden_size, rng));
    c.hidden.weight =
        &ps.add(name + ".w_h", uniform_init<S>(hidden_size, 3 * hidden_size, hidden_size, rng));
    c.hidden.bias = &ps.add(name + ".b_h", uniform_init<S>(1, 3 * hidden_size, hidden_size, rng));
    return c;
  }
  static GRUCell bind(ParameterSet<S>& ps, const std::string& name) {
    GRUCell c;
    c.input = {&ps.at(name + ".w_x"), &ps.at(name + ".b_x")};
    c.hidden = {&ps.at(name + ".w_h"), &ps.at(name + ".b_h")};
    c.hidden_size = c.hidden.weight->value.rows();
    return c;
  }

  Var<S> step(Tape<S>& t, Var<S> x, Var<S> h) const {
    const std::size_t hs = hidden_size;
    Var<S> gx = input(t, x);
    Var<S> gh = hidden(t, h);
    Var<S> r = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, hs), ad::slice_cols(gh, 0, hs)));
    Var<S> z = ad::sigmoid(ad::add(ad::slice_cols(gx, hs, 2 * hs), ad::slice_cols(gh, hs, 2 * hs)));
    Var<S> n = ad::tanh(ad::add(ad::slice_cols(gx, 2 * hs, 3 * hs),
                                ad::mul(r, ad::slice_cols(gh, 2 * hs, 3 * hs))));
    return ad::add(ad::mul(ad::one_minus(z), n), ad::mul(z, h));
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip, 0 disables
};

/// Adam over every non-frozen parameter of a set.
template <typename S>
class Adam {
 public:
  Adam(ParameterSet<S>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.rows(), params[i].value.cols());
      v_.emplace_back(params[i].value.rows(), params[i].value.cols());
    }
  }

  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  [[nodiscard]] double lr() const noexcept { return cfg_.lr; }

  /// Applies one update from the accumulated gradients.
  void step() {
    ++t_;
    double scale_factor = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (std::size_t i = 0; i < params_->size(); ++i) {
        auto& p = (*params_)[i];
        if (p.frozen || p.grad.empty()) continue;
        for (S g : p.grad.flat()) sq += static_cast<double>(g) * static_cast<double>(g);
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) scale_factor = cfg_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      auto& p = (*params_)[i];
      if (p.frozen || p.grad.empty()) continue;
      auto w = p.value.flat();
      auto g = p.grad.flat();
      auto m = m_[i].flat();
      auto v = v_[i].flat();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = static_cast<double>(g[k]) * scale_factor;
        const double mk = cfg_.beta1 * static_cast<double>(m[k]) + (1.0 - cfg_.beta1) * gk;
        const double vk = cfg_.beta2 * static_cast<double>(v[k]) + (1.0 - cfg_.beta2) * gk * gk;
        m[k] = static_cast<S>(mk);
        v[k] = static_cast<S>(vk);
        w[k] = static_cast<S>(static_cast<double>(w[k]) -
                              cfg_.lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg_.eps));
      }
    }
  }

 private:
  ParameterSet<S>* params_;
  AdamConfig cfg_;
  std::vector<Matrix<S>> m_;
  std::vector<Matrix<S>> v_;
  long t_ = 0;
};

}  // namespace relcp::nn

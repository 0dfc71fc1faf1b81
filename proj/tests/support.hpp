#pragma once

// Shared helpers for the unit suites: random fixtures and a central
// finite-difference gradient check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "relcp/core_data.hpp"
#include "relcp/matrix.hpp"
#include "relcp/nn.hpp"

namespace relcp::testing {

inline Matrix<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Matrix<double> m(r, c);
  for (auto& v : m.flat()) v = d(rng);
  return m;
}

inline TimeSeriesCollection random_collection(std::size_t steps, std::size_t nodes, std::uint64_t seed,
                                              std::size_t cov_channels = 0) {
  std::mt19937_64 rng(seed);
  auto values = random_matrix(steps, nodes, rng);
  if (cov_channels == 0) return TimeSeriesCollection(std::move(values));
  Covariates cov{steps, nodes, cov_channels, {}};
  std::normal_distribution<double> d(0.0, 1.0);
  cov.data.resize(steps * nodes * cov_channels);
  for (auto& v : cov.data) v = d(rng);
  return TimeSeriesCollection(std::move(values), std::move(cov));
}

struct GradCheck {
  std::string name;
  double rel_error = 0.0;
  double analytic_norm = 0.0;
};

/// Compares analytic gradients (filled by `backward`, which must zero and
/// accumulate params' grads) against central differences of `loss` for every
/// tensor. Returns ||g_a - g_n|| / max(||g_a||, ||g_n||, 1e-12) per tensor.
inline std::vector<GradCheck> check_gradients(nn::ParameterSet<double>& params,
                                              const std::function<double()>& loss,
                                              const std::function<void()>& backward, double eps = 1e-4) {
  backward();
  std::vector<GradCheck> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const Matrix<double> analytic = p.grad;
    double diff = 0.0, na = 0.0, nn_ = 0.0;
    for (std::size_t e = 0; e < p.value.size(); ++e) {
      const double orig = p.value.flat()[e];
      p.value.flat()[e] = orig + eps;
      const double up = loss();
      p.value.flat()[e] = orig - eps;
      const double down = loss();
      p.value.flat()[e] = orig;
      const double num = (up - down) / (2.0 * eps);
      const double a = analytic.flat()[e];
      diff += (a - num) * (a - num);
      na += a * a;
      nn_ += num * num;
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
    out.push_back({p.name, std::sqrt(diff) / denom, std::sqrt(na)});
  }
  return out;
}

}  // namespace relcp::testing

#include "relcp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "relcp/errors.hpp"

namespace relcp {

double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double level) {
  if (values.empty()) throw std::invalid_argument("weighted_quantile: empty sample");
  if (values.size() != weights.size()) {
    throw std::invalid_argument("weighted_quantile: values and weights differ in length");
  }
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("weighted_quantile: level outside (0, 1)");
  double total = 0.0;
  double w_max = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("weighted_quantile: weights must be finite and non-negative");
    }
    total += w;
    w_max = std::max(w_max, w);
  }
  if (w_max <= 0.0) throw std::invalid_argument("weighted_quantile: all weights are zero");
  total += w_max;  // virtual +inf point

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  const double threshold = level * total * (1.0 - 1e-12);
  double cum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cum += weights[order[k]];
    // Ties form one atom: {values <= v} includes every copy of v.
    if (k + 1 < order.size() && values[order[k + 1]] == values[order[k]]) continue;
    if (cum >= threshold) return values[order[k]];
  }
  return values[order.back()];
}

double weighted_quantile_lower(std::span<const double> values, std::span<const double> weights,
                               double level) {
  std::vector<double> neg(values.size());
  std::transform(values.begin(), values.end(), neg.begin(), [](double v) { return -v; });
  return -weighted_quantile(neg, weights, 1.0 - level);
}

std::pair<double, double> conformal_offsets(std::span<const double> values,
                                            std::span<const double> weights, double alpha) {
  return {weighted_quantile_lower(values, weights, alpha / 2.0),
          weighted_quantile(values, weights, 1.0 - alpha / 2.0)};
}

namespace {

struct PoolEntry {
  std::size_t step;
  double value;
};

enum class Scheme { uniform, exponential, window };

struct SchemeSpec {
  Scheme scheme = Scheme::uniform;
  double rho = 1.0;
  std::size_t window = 0;
};

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

std::size_t min_pool(double alpha) {
  return static_cast<std::size_t>(std::ceil(1.0 / alpha - 1e-9));
}

/// Offsets for a chronologically ordered pool under a weighting scheme.
std::pair<double, double> pool_offsets(const std::vector<PoolEntry>& pool, const SchemeSpec& spec,
                                       double alpha, std::vector<double>& values,
                                       std::vector<double>& weights) {
  std::size_t first = 0;
  if (spec.scheme == Scheme::window && pool.size() > spec.window) first = pool.size() - spec.window;
  values.clear();
  weights.clear();
  const std::size_t newest = pool.back().step;
  const double log_rho = spec.scheme == Scheme::exponential ? std::log(spec.rho) : 0.0;
  for (std::size_t k = first; k < pool.size(); ++k) {
    values.push_back(pool[k].value);
    if (spec.scheme == Scheme::exponential && spec.rho < 1.0) {
      // rho^(t - s) normalized by rho^(t - newest); the common factor cancels.
      weights.push_back(std::exp(static_cast<double>(newest - pool[k].step) * log_rho));
    } else {
      weights.push_back(1.0);
    }
  }
  return conformal_offsets(values, weights, alpha);
}

IntervalSet run_scheme(const ResidualSet& calibration, const Matrix<double>& forecasts,
                       std::span<const std::size_t> target_steps, double alpha,
                       const SchemeSpec& spec, Stream stream) {
  check_alpha(alpha);
  const std::size_t nodes = calibration.nodes();
  if (forecasts.cols() != nodes || forecasts.rows() != target_steps.size()) {
    throw std::invalid_argument("conformal: forecasts " + shape_str(forecasts) + " do not match " +
                                std::to_string(target_steps.size()) + " steps x " +
                                std::to_string(nodes) + " nodes");
  }
  if (calibration.size() < min_pool(alpha)) {
    throw ConfigError("conformal: " + std::to_string(calibration.size()) +
                      " calibration residuals per node, need at least " +
                      std::to_string(min_pool(alpha)) + " for alpha " + std::to_string(alpha));
  }
  if (stream.residuals != nullptr && stream.residuals->nodes() != nodes) {
    throw std::invalid_argument("conformal: streamed residuals have the wrong node count");
  }

  IntervalSet out;
  out.alpha = alpha;
  out.target_steps.assign(target_steps.begin(), target_steps.end());
  out.lower.resize(forecasts.rows(), nodes);
  out.upper.resize(forecasts.rows(), nodes);

  const std::size_t last_cal =
      calibration.target_steps.empty() ? 0 : calibration.target_steps.back();
  const std::size_t lag = std::max<std::size_t>(calibration.horizon, 1);

  std::vector<double> values;
  std::vector<double> weights;
  for (std::size_t i = 0; i < nodes; ++i) {
    std::vector<PoolEntry> pool;
    pool.reserve(calibration.size());
    for (std::size_t r = 0; r < calibration.size(); ++r)
      pool.push_back({calibration.target_steps[r], calibration.residuals(r, i)});

    if (stream.residuals == nullptr) {
      const auto [lo, hi] = pool_offsets(pool, spec, alpha, values, weights);
      for (std::size_t t = 0; t < forecasts.rows(); ++t) {
        out.lower(t, i) = forecasts(t, i) + lo;
        out.upper(t, i) = forecasts(t, i) + hi;
      }
      continue;
    }

    const ResidualSet& live = *stream.residuals;
    std::size_t next = 0;  // next streamed residual not yet in the pool
    while (next < live.size() && live.target_steps[next] <= last_cal) ++next;
    std::pair<double, double> offsets = pool_offsets(pool, spec, alpha, values, weights);
    for (std::size_t t = 0; t < forecasts.rows(); ++t) {
      bool grown = false;
      while (next < live.size() && live.target_steps[next] + lag <= target_steps[t]) {
        pool.push_back({live.target_steps[next], live.residuals(next, i)});
        ++next;
        grown = true;
      }
      if (grown) offsets = pool_offsets(pool, spec, alpha, values, weights);
      out.lower(t, i) = forecasts(t, i) + offsets.first;
      out.upper(t, i) = forecasts(t, i) + offsets.second;
    }
  }
  return out;
}

}  // namespace

IntervalSet scp_intervals(const ResidualSet& calibration, const Matrix<double>& forecasts,
                          std::span<const std::size_t> target_steps, double alpha, Stream stream) {
  return run_scheme(calibration, forecasts, target_steps, alpha, {}, stream);
}

IntervalSet nexcp_intervals(const ResidualSet& calibration, const Matrix<double>& forecasts,
                            std::span<const std::size_t> target_steps, double alpha, double rho,
                            Stream stream) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("nexcp: rho must lie in (0, 1]");
  return run_scheme(calibration, forecasts, target_steps, alpha,
                    {Scheme::exponential, rho, 0}, stream);
}

IntervalSet seqcp_intervals(const ResidualSet& calibration, const Matrix<double>& forecasts,
                            std::span<const std::size_t> target_steps, double alpha,
                            std::size_t window, Stream stream) {
  check_alpha(alpha);
  if (window < min_pool(alpha)) {
    throw ConfigError("seqcp: window " + std::to_string(window) + " is too small for alpha " +
                      std::to_string(alpha) + " (need >= " + std::to_string(min_pool(alpha)) + ")");
  }
  return run_scheme(calibration, forecasts, target_steps, alpha, {Scheme::window, 1.0, window},
                    stream);
}

}  // namespace relcp

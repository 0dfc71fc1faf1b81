#include "relcp/intervals.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace relcp {

namespace {

constexpr double kLevelTol = 1e-9;

void require_aligned(const IntervalSet& iv, const Matrix<double>& actuals) {
  if (!iv.lower.same_shape(actuals) || !iv.upper.same_shape(actuals)) {
    throw std::invalid_argument("intervals " + shape_str(iv.lower) + " and actuals " +
                                shape_str(actuals) + " are not aligned");
  }
}

}  // namespace

QuantileGrid QuantileGrid::uniform(std::size_t divisions) {
  if (divisions < 2) throw std::invalid_argument("QuantileGrid: need at least 2 divisions");
  QuantileGrid g;
  for (std::size_t i = 1; i < divisions; ++i)
    g.levels.push_back(static_cast<double>(i) / static_cast<double>(divisions));
  return g;
}

void QuantileGrid::validate() const {
  if (levels.empty()) throw std::invalid_argument("QuantileGrid: empty");
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (!(levels[j] > 0.0 && levels[j] < 1.0)) {
      throw std::invalid_argument("QuantileGrid: level outside (0, 1)");
    }
    if (j > 0 && !(levels[j] > levels[j - 1])) {
      throw std::invalid_argument("QuantileGrid: levels must be strictly increasing");
    }
  }
}

std::optional<std::size_t> QuantileGrid::index_of(double level) const {
  for (std::size_t j = 0; j < levels.size(); ++j)
    if (std::abs(levels[j] - level) <= kLevelTol) return j;
  return std::nullopt;
}

double QuantileGrid::interpolate(std::span<const double> q, double level) const {
  if (q.size() != levels.size()) throw std::invalid_argument("QuantileGrid: value count mismatch");
  if (auto j = index_of(level)) return q[*j];
  if (level < levels.front() || level > levels.back()) {
    throw std::out_of_range("QuantileGrid: level " + std::to_string(level) + " outside the grid");
  }
  std::size_t hi = 1;
  while (levels[hi] < level) ++hi;
  const double w = (level - levels[hi - 1]) / (levels[hi] - levels[hi - 1]);
  return (1.0 - w) * q[hi - 1] + w * q[hi];
}

PredictionInterval build_interval(double forecast, std::span<const double> quantiles,
                                  const QuantileGrid& grid, double alpha, bool interpolate) {
  const double lo_level = alpha / 2.0;
  const double hi_level = 1.0 - alpha / 2.0;
  double lo = 0.0;
  double hi = 0.0;
  if (interpolate) {
    lo = grid.interpolate(quantiles, lo_level);
    hi = grid.interpolate(quantiles, hi_level);
  } else {
    const auto a = grid.index_of(lo_level);
    const auto b = grid.index_of(hi_level);
    if (!a || !b) {
      throw std::invalid_argument("build_interval: levels " + std::to_string(lo_level) + " / " +
                                  std::to_string(hi_level) + " are not on the grid");
    }
    lo = quantiles[*a];
    hi = quantiles[*b];
  }
  return {forecast + lo, forecast + hi, 0, 0, alpha};
}

BetaInterval build_interval_beta(double forecast, std::span<const double> quantiles,
                                 const QuantileGrid& grid, double alpha) {
  const double lo_level = alpha / 2.0;
  const double hi_level = 1.0 - alpha / 2.0;
  std::optional<std::size_t> best_a;
  std::optional<std::size_t> best_b;
  double best_width = 0.0;
  double best_beta = 0.0;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const double beta = grid.levels[a] - lo_level;
    const auto b = grid.index_of(hi_level + beta);
    if (!b || *b <= a) continue;
    const double width = quantiles[*b] - quantiles[a];
    bool better = !best_a.has_value();
    if (!better) {
      const double tol = 1e-12 * (1.0 + std::abs(best_width));
      if (width < best_width - tol) {
        better = true;
      } else if (std::abs(width - best_width) <= tol) {
        // Tie: prefer the shift closest to zero, then the smaller one.
        const double d_new = std::abs(beta);
        const double d_old = std::abs(best_beta);
        better = d_new < d_old - kLevelTol || (std::abs(d_new - d_old) <= kLevelTol && beta < best_beta);
      }
    }
    if (better) {
      best_a = a;
      best_b = b;
      best_width = width;
      best_beta = beta;
    }
  }
  if (!best_a) return {build_interval(forecast, quantiles, grid, alpha, true), 0.0, true};
  return {{forecast + quantiles[*best_a], forecast + quantiles[*best_b], 0, 0, alpha},
          std::abs(best_beta) <= kLevelTol ? 0.0 : best_beta,
          false};
}

IntervalSet build_intervals(const Matrix<double>& forecasts, const QuantilePrediction& quantiles,
                            double alpha, bool beta) {
  if (forecasts.rows() != quantiles.steps || forecasts.cols() != quantiles.nodes) {
    throw std::invalid_argument("build_intervals: forecasts " + shape_str(forecasts) +
                                " do not match the quantile prediction");
  }
  IntervalSet out;
  out.lower.resize(quantiles.steps, quantiles.nodes);
  out.upper.resize(quantiles.steps, quantiles.nodes);
  out.target_steps = quantiles.target_steps;
  out.alpha = alpha;
  for (std::size_t t = 0; t < quantiles.steps; ++t) {
    for (std::size_t i = 0; i < quantiles.nodes; ++i) {
      PredictionInterval pi;
      if (beta) {
        const auto b = build_interval_beta(forecasts(t, i), quantiles.at(t, i), quantiles.grid, alpha);
        pi = b.interval;
        out.beta_fallbacks += b.fallback ? 1 : 0;
      } else {
        pi = build_interval(forecasts(t, i), quantiles.at(t, i), quantiles.grid, alpha);
      }
      out.lower(t, i) = pi.lower;
      out.upper(t, i) = pi.upper;
    }
  }
  return out;
}

double winkler_score(double lower, double upper, double x, double alpha) {
  double s = upper - lower;
  if (x < lower) s += (2.0 / alpha) * (lower - x);
  if (x > upper) s += (2.0 / alpha) * (x - upper);
  return s;
}

MetricReport evaluate_intervals(const IntervalSet& intervals, const Matrix<double>& actuals) {
  require_aligned(intervals, actuals);
  const std::size_t steps = intervals.steps();
  const std::size_t nodes = intervals.nodes();
  MetricReport r;
  r.alpha = intervals.alpha;
  r.count = steps * nodes;
  r.per_node.assign(nodes, {});
  if (r.count == 0) return r;
  const double target = 1.0 - intervals.alpha;
  for (std::size_t i = 0; i < nodes; ++i) {
    double cov = 0.0;
    double width = 0.0;
    double wink = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double lo = intervals.lower(t, i);
      const double hi = intervals.upper(t, i);
      const double x = actuals(t, i);
      cov += (x >= lo && x <= hi) ? 1.0 : 0.0;
      width += hi - lo;
      wink += winkler_score(lo, hi, x, intervals.alpha);
    }
    const double n = static_cast<double>(steps);
    r.per_node[i] = {100.0 * (cov / n - target), width / n, wink / n};
  }
  // Every node has the same step count, so the node mean is the mean over all cases.
  for (const auto& m : r.per_node) {
    r.delta_cov += m.delta_cov;
    r.pi_width += m.pi_width;
    r.winkler += m.winkler;
  }
  r.delta_cov /= static_cast<double>(nodes);
  r.pi_width /= static_cast<double>(nodes);
  r.winkler /= static_cast<double>(nodes);
  return r;
}

double delta_cov(const IntervalSet& intervals, const Matrix<double>& actuals) {
  return evaluate_intervals(intervals, actuals).delta_cov;
}

double pi_width(const IntervalSet& intervals) {
  if (intervals.steps() * intervals.nodes() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < intervals.lower.size(); ++k)
    s += intervals.upper.flat()[k] - intervals.lower.flat()[k];
  return s / static_cast<double>(intervals.lower.size());
}

double winkler(const IntervalSet& intervals, const Matrix<double>& actuals) {
  return evaluate_intervals(intervals, actuals).winkler;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& m : per_node)
    nodes.push_back({{"delta_cov", m.delta_cov}, {"pi_width", m.pi_width}, {"winkler", m.winkler}});
  return {{"method", method},     {"dataset", dataset},     {"base_model", base_model},
          {"alpha", alpha},       {"seed", seed},           {"delta_cov", delta_cov},
          {"pi_width", pi_width}, {"winkler", winkler},     {"count", count},
          {"per_node", nodes}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.method = j.value("method", "");
  r.dataset = j.value("dataset", "");
  r.base_model = j.value("base_model", "");
  r.alpha = j.at("alpha");
  r.seed = j.value("seed", std::uint64_t{0});
  r.delta_cov = j.at("delta_cov");
  r.pi_width = j.at("pi_width");
  r.winkler = j.at("winkler");
  r.count = j.value("count", std::size_t{0});
  if (j.contains("per_node")) {
    for (const auto& m : j.at("per_node")) r.per_node.push_back({m.at("delta_cov"), m.at("pi_width"), m.at("winkler")});
  }
  return r;
}

std::string MetricReport::csv_header() {
  return "method,dataset,base_model,alpha,delta_cov,pi_width,winkler,seed";
}

std::string MetricReport::csv_row() const {
  return fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{}", method, dataset, base_model, alpha,
                     delta_cov, pi_width, winkler, seed);
}

}  // namespace relcp

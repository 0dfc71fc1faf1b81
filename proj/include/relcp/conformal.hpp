#pragma once

// Classic conformal baselines built on one weighted empirical quantile:
// split CP, exponentially weighted CP and sliding-window CP.

#include <span>
#include <utility>

#include "relcp/core_data.hpp"
#include "relcp/intervals.hpp"

namespace relcp {

/// Smallest v with normalized weight of {values <= v} >= level, where the pool
/// is extended by a virtual +inf point carrying the largest single weight. If
/// the virtual point is selected, max(values) is returned.
double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double level);

/// Lower-tail counterpart: -weighted_quantile(-values, weights, 1 - level).
double weighted_quantile_lower(std::span<const double> values, std::span<const double> weights,
                               double level);

/// (lower offset, upper offset) at levels alpha/2 and 1 - alpha/2.
std::pair<double, double> conformal_offsets(std::span<const double> values,
                                            std::span<const double> weights, double alpha);

/// Test-time residuals that may join the calibration pool once observed.
/// Residual at target step s is usable for target step t when s + max(H, 1) <= t.
struct Stream {
  const ResidualSet* residuals = nullptr;
};

IntervalSet scp_intervals(const ResidualSet& calibration, const Matrix<double>& forecasts,
                          std::span<const std::size_t> target_steps, double alpha,
                          Stream stream = {});

/// Residual at step s weighted rho^(t - s) for target step t.
IntervalSet nexcp_intervals(const ResidualSet& calibration, const Matrix<double>& forecasts,
                            std::span<const std::size_t> target_steps, double alpha, double rho,
                            Stream stream = {});

/// Unit weights on the `window` most recent residuals before t.
IntervalSet seqcp_intervals(const ResidualSet& calibration, const Matrix<double>& forecasts,
                            std::span<const std::size_t> target_steps, double alpha,
                            std::size_t window, Stream stream = {});

}  // namespace relcp

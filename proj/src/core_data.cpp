#include "relcp/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "relcp/errors.hpp"

namespace relcp {

TimeSeriesCollection::TimeSeriesCollection(Matrix<double> values,
                                           std::optional<Covariates> covariates)
    : values_(std::move(values)), covariates_(std::move(covariates)) {
  for (double v : values_.flat()) {
    if (!std::isfinite(v)) throw std::invalid_argument("TimeSeriesCollection: non-finite value");
  }
  if (covariates_) {
    const auto& c = *covariates_;
    if (c.steps != values_.rows() || c.nodes != values_.cols() ||
        c.data.size() != c.steps * c.nodes * c.channels) {
      throw std::invalid_argument("TimeSeriesCollection: covariates do not share the T/N axes");
    }
    for (double v : c.data) {
      if (!std::isfinite(v)) throw std::invalid_argument("TimeSeriesCollection: non-finite covariate");
    }
  }
}

void SplitSpec::validate() const {
  auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_open_unit(train_frac) || !in_open_unit(cal_frac) || !in_open_unit(test_frac)) {
    throw std::invalid_argument("SplitSpec: fractions must lie in (0, 1)");
  }
  if (std::abs(train_frac + cal_frac + test_frac - 1.0) > 1e-9) {
    throw std::invalid_argument("SplitSpec: fractions must sum to 1");
  }
  if (val_frac_of_cal < 0.0 || val_frac_of_cal >= 1.0) {
    throw std::invalid_argument("SplitSpec: val_frac_of_cal must lie in [0, 1)");
  }
}

SplitIndex make_splits(std::size_t steps, const SplitSpec& spec) {
  spec.validate();
  if (steps < 10) throw std::invalid_argument("make_splits: need at least 10 steps");
  const double t = static_cast<double>(steps);
  // The epsilon keeps floor() stable for products like 0.8 * 10 = 7.999...
  const auto b1 = static_cast<std::size_t>(std::floor(spec.train_frac * t + 1e-9));
  const auto b2 = static_cast<std::size_t>(std::floor((spec.train_frac + spec.cal_frac) * t + 1e-9));
  const auto nval =
      static_cast<std::size_t>(std::floor(spec.val_frac_of_cal * static_cast<double>(b2 - b1) + 1e-9));
  SplitIndex idx{{0, b1}, {b1, b1 + nval}, {b1 + nval, b2}, {b2, steps}};
  if (idx.train.empty() || idx.cal.empty() || idx.test.empty() ||
      (spec.val_frac_of_cal > 0.0 && idx.val.empty())) {
    throw std::invalid_argument("make_splits: " + std::to_string(steps) +
                                " steps are too few for the requested split");
  }
  return idx;
}

Scaler fit_scaler(const TimeSeriesCollection& collection, StepRange range) {
  if (range.empty() || range.end > collection.steps()) {
    throw std::invalid_argument("fit_scaler: empty or out-of-bounds range");
  }
  const auto& v = collection.values();
  const std::size_t n = collection.nodes();
  double sum = 0.0;
  for (std::size_t t = range.begin; t < range.end; ++t)
    for (std::size_t i = 0; i < n; ++i) sum += v(t, i);
  const double count = static_cast<double>(range.size() * n);
  const double mean = sum / count;
  double ss = 0.0;
  for (std::size_t t = range.begin; t < range.end; ++t)
    for (std::size_t i = 0; i < n; ++i) ss += (v(t, i) - mean) * (v(t, i) - mean);
  return {mean, std::max(std::sqrt(ss / count), Scaler::kMinStd)};
}

Scaler fit_scaler(const Matrix<double>& values) {
  if (values.empty()) throw std::invalid_argument("fit_scaler: empty matrix");
  TimeSeriesCollection tmp(values);
  return fit_scaler(tmp, {0, values.rows()});
}

WindowBatch gather_windows(const TimeSeriesCollection& collection, WindowSpec spec,
                           std::span<const std::size_t> target_steps) {
  const std::size_t n = collection.nodes();
  const std::size_t d = 1 + collection.covariate_channels();
  const std::size_t back = spec.window - 1 + spec.horizon;
  WindowBatch out;
  out.batch = target_steps.size();
  out.window = spec.window;
  out.nodes = n;
  out.channels = d;
  out.inputs.resize(out.batch * spec.window * n * d);
  out.targets.resize(out.batch, n);
  out.target_steps.assign(target_steps.begin(), target_steps.end());
  const auto& v = collection.values();
  const auto& cov = collection.covariates();
  for (std::size_t b = 0; b < out.batch; ++b) {
    const std::size_t target = target_steps[b];
    if (target < back || target >= collection.steps()) {
      throw std::out_of_range("gather_windows: target step " + std::to_string(target) +
                              " has no full window");
    }
    const std::size_t first = target - back;
    for (std::size_t w = 0; w < spec.window; ++w) {
      const std::size_t t = first + w;
      for (std::size_t i = 0; i < n; ++i) {
        double* dst = &out.inputs[((b * spec.window + w) * n + i) * d];
        dst[0] = v(t, i);
        for (std::size_t c = 1; c < d; ++c) dst[c] = cov->at(t, i, c - 1);
      }
    }
    for (std::size_t i = 0; i < n; ++i) out.targets(b, i) = v(target, i);
  }
  return out;
}

std::vector<WindowBatch> window_iter(const TimeSeriesCollection& collection, WindowSpec spec,
                                     StepRange range, std::size_t batch_size) {
  if (spec.window < 1) throw std::invalid_argument("window_iter: window must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("window_iter: batch_size must be >= 1");
  if (range.end > collection.steps()) throw std::invalid_argument("window_iter: range out of bounds");
  const std::size_t count = spec.samples_in(range);
  if (count == 0) {
    throw std::invalid_argument("window_iter: range of " + std::to_string(range.size()) +
                                " steps is shorter than W + H");
  }
  std::vector<WindowBatch> batches;
  const std::size_t first = spec.first_target(range);
  for (std::size_t k = 0; k < count; k += batch_size) {
    std::vector<std::size_t> steps;
    for (std::size_t j = k; j < std::min(count, k + batch_size); ++j) steps.push_back(first + j);
    batches.push_back(gather_windows(collection, spec, steps));
  }
  return batches;
}

ResidualSet ResidualSet::restrict(StepRange range) const {
  ResidualSet out;
  out.horizon = horizon;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < target_steps.size(); ++r)
    if (range.contains(target_steps[r])) rows.push_back(r);
  out.residuals.resize(rows.size(), nodes());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto src = residuals.row(rows[k]);
    std::copy(src.begin(), src.end(), out.residuals.row(k).begin());
    out.target_steps.push_back(target_steps[rows[k]]);
  }
  return out;
}

std::size_t ResidualSet::row_of(std::size_t step) const {
  auto it = std::lower_bound(target_steps.begin(), target_steps.end(), step);
  if (it == target_steps.end() || *it != step) {
    throw std::out_of_range("ResidualSet: no residual for step " + std::to_string(step));
  }
  return static_cast<std::size_t>(it - target_steps.begin());
}

ResidualSet compute_residuals(const Matrix<double>& actuals, const Matrix<double>& forecasts,
                              std::vector<std::size_t> target_steps, std::size_t horizon) {
  if (!actuals.same_shape(forecasts) || target_steps.size() != actuals.rows()) {
    throw std::invalid_argument("compute_residuals: shape mismatch " + shape_str(actuals) + " vs " +
                                shape_str(forecasts));
  }
  ResidualSet out;
  out.residuals = actuals;
  auto r = out.residuals.flat();
  auto f = forecasts.flat();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= f[i];
  out.target_steps = std::move(target_steps);
  out.horizon = horizon;
  return out;
}

// ------------------------------------------------------------------ CSV I/O

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
    out.back().remove_suffix(1);
  }
  return out;
}

double parse_real(std::string_view s, const std::filesystem::path& path, std::size_t line) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument(path.string() + ":" + std::to_string(line) + ": cannot parse '" +
                                std::string(s) + "'");
  }
  return v;
}

void append_real(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

std::pair<std::vector<std::size_t>, Matrix<double>> read_matrix_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": missing header row");
  const std::size_t cols = split_csv_line(line).size();
  if (cols < 2) throw std::invalid_argument(path.string() + ": need an index and at least one node");
  std::vector<std::size_t> steps;
  std::vector<double> data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != cols) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(cols) + " fields");
    }
    steps.push_back(static_cast<std::size_t>(parse_real(fields[0], path, lineno)));
    for (std::size_t c = 1; c < cols; ++c) data.push_back(parse_real(fields[c], path, lineno));
  }
  Matrix<double> m(steps.size(), cols - 1, std::move(data));
  return {std::move(steps), std::move(m)};
}

TimeSeriesCollection read_collection_csv(const std::filesystem::path& values_path,
                                         std::span<const std::filesystem::path> covariate_paths) {
  auto [steps, values] = read_matrix_csv(values_path);
  std::optional<Covariates> cov;
  if (!covariate_paths.empty()) {
    Covariates c;
    c.steps = values.rows();
    c.nodes = values.cols();
    c.channels = covariate_paths.size();
    c.data.resize(c.steps * c.nodes * c.channels);
    for (std::size_t k = 0; k < covariate_paths.size(); ++k) {
      auto [csteps, cvals] = read_matrix_csv(covariate_paths[k]);
      if (!cvals.same_shape(values)) {
        throw std::invalid_argument(covariate_paths[k].string() +
                                    ": covariate shape does not match the values");
      }
      for (std::size_t t = 0; t < c.steps; ++t)
        for (std::size_t i = 0; i < c.nodes; ++i) c.data[(t * c.nodes + i) * c.channels + k] = cvals(t, i);
    }
    cov = std::move(c);
  }
  return TimeSeriesCollection(std::move(values), std::move(cov));
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix<double>& values,
                      std::span<const std::size_t> steps, const std::string& index_name) {
  if (steps.size() != values.rows()) throw std::invalid_argument("write_matrix_csv: step count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::string buf = index_name;
  for (std::size_t i = 0; i < values.cols(); ++i) buf += ",n" + std::to_string(i);
  buf += '\n';
  for (std::size_t r = 0; r < values.rows(); ++r) {
    buf += std::to_string(steps[r]);
    for (double v : values.row(r)) {
      buf += ',';
      append_real(buf, v);
    }
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

}  // namespace relcp

#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "relcp/core_data.hpp"
#include "support.hpp"

using namespace relcp;

TEST_SUITE("core_data") {

TEST_CASE("make_splits boundaries") {
  SplitSpec spec;  // 0.4 / 0.4 / 0.2, val 0.25
  auto s = make_splits(100, spec);
  CHECK(s.train == StepRange{0, 40});
  CHECK(s.val == StepRange{40, 50});
  CHECK(s.cal == StepRange{50, 80});
  CHECK(s.test == StepRange{80, 100});

  spec.val_frac_of_cal = 0.0;
  s = make_splits(10, spec);
  CHECK(s.train == StepRange{0, 4});
  CHECK(s.val.empty());
  CHECK(s.cal == StepRange{4, 8});
  CHECK(s.test == StepRange{8, 10});

  spec.val_frac_of_cal = 0.25;
  CHECK_THROWS_AS(make_splits(5, spec), std::invalid_argument);
}

TEST_CASE("make_splits partitions the axis for random specs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 0.6);
  std::uniform_int_distribution<std::size_t> steps(200, 5000);
  for (int rep = 0; rep < 500; ++rep) {
    SplitSpec spec;
    spec.train_frac = u(rng);
    spec.cal_frac = std::min(u(rng), 0.95 - spec.train_frac);
    spec.test_frac = 1.0 - spec.train_frac - spec.cal_frac;
    spec.val_frac_of_cal = u(rng) * 0.5;
    const std::size_t t = steps(rng);
    const auto s = make_splits(t, spec);
    CHECK(s.train.begin == 0);
    CHECK(s.train.end == s.val.begin);
    CHECK(s.val.end == s.cal.begin);
    CHECK(s.cal.end == s.test.begin);
    CHECK(s.test.end == t);
  }
}

TEST_CASE("split spec validation") {
  SplitSpec spec{0.5, 0.4, 0.2, 0.1};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = {0.4, 0.4, 0.2, 1.0};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("fit_scaler examples") {
  auto s = fit_scaler(Matrix<double>(3, 2, 0.0));
  CHECK(s.mean == 0.0);
  CHECK(s.std == Scaler::kMinStd);

  s = fit_scaler(Matrix<double>{{-1.0, 1.0}, {1.0, -1.0}});
  CHECK(s.mean == doctest::Approx(0.0));
  CHECK(s.std == doctest::Approx(1.0));

  s = fit_scaler(Matrix<double>{{0.0, 1.0}, {2.0, 3.0}});
  CHECK(s.mean == doctest::Approx(1.5));
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));

  TimeSeriesCollection c(Matrix<double>(4, 2, 1.0));
  CHECK_THROWS_AS(fit_scaler(c, StepRange{2, 2}), std::invalid_argument);
}

TEST_CASE("scaler round trip") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 50.0);
  const Scaler s{3.7, 0.21};
  for (int i = 0; i < 1000; ++i) {
    const double x = d(rng);
    CHECK(std::abs(s.inverse(s.transform(x)) - x) < 1e-9);
  }
}

TEST_CASE("window_iter counts and target alignment") {
  const auto c = testing::random_collection(40, 3, 1);
  auto total = [&](StepRange r, WindowSpec w, std::size_t bs) {
    std::size_t n = 0;
    for (const auto& b : window_iter(c, w, r, bs)) n += b.batch;
    return n;
  };
  CHECK(total({0, 10}, {5, 0}, 4) == 6);
  CHECK(total({0, 10}, {5, 3}, 4) == 3);
  CHECK_THROWS_AS(window_iter(c, {5, 3}, {0, 5}, 4), std::invalid_argument);

  const StepRange r{7, 33};
  const WindowSpec w{4, 2};
  std::vector<std::size_t> seen;
  for (const auto& b : window_iter(c, w, r, 5)) {
    CHECK(b.batch <= 5);
    for (std::size_t k = 0; k < b.batch; ++k) {
      seen.push_back(b.target_steps[k]);
      // Last input step + H equals the target step.
      const std::size_t last_input = b.target_steps[k] - w.horizon;
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(b.input(k, w.window - 1, i, 0) == c.values()(last_input, i));
        CHECK(b.targets(k, i) == c.values()(b.target_steps[k], i));
      }
    }
  }
  CHECK(seen.size() == r.size() - w.window - w.horizon + 1);
  std::vector<std::size_t> expect(seen.size());
  std::iota(expect.begin(), expect.end(), r.begin + w.window - 1 + w.horizon);
  CHECK(seen == expect);
}

TEST_CASE("covariates are appended after the target channel") {
  const auto c = testing::random_collection(12, 2, 5, 2);
  const std::vector<std::size_t> t{6};
  const auto b = gather_windows(c, {3, 1}, t);
  CHECK(b.channels == 3);
  CHECK(b.input(0, 0, 1, 2) == c.covariates()->at(3, 1, 1));
}

TEST_CASE("non-finite values are rejected") {
  Matrix<double> m(2, 2, 0.0);
  m(1, 1) = std::nan("");
  CHECK_THROWS_AS(TimeSeriesCollection{m}, std::invalid_argument);
}

TEST_CASE("compute_residuals examples and antisymmetry") {
  auto r = compute_residuals(Matrix<double>{{3.0}}, Matrix<double>{{2.0}}, {0}, 1);
  CHECK(r.residuals(0, 0) == 1.0);
  r = compute_residuals(Matrix<double>{{1.0, -1.0}}, Matrix<double>{{0.5, 0.5}}, {4}, 1);
  CHECK(r.residuals(0, 0) == 0.5);
  CHECK(r.residuals(0, 1) == -1.5);
  CHECK_THROWS_AS(compute_residuals(Matrix<double>(2, 2), Matrix<double>(2, 3), {0, 1}, 1),
                  std::invalid_argument);

  std::mt19937_64 rng(2);
  const auto a = testing::random_matrix(20, 4, rng);
  const auto f = testing::random_matrix(20, 4, rng);
  std::vector<std::size_t> steps(20);
  std::iota(steps.begin(), steps.end(), 0);
  const auto x = compute_residuals(a, f, steps, 1);
  const auto y = compute_residuals(f, a, steps, 1);
  for (std::size_t k = 0; k < x.residuals.size(); ++k) CHECK(x.residuals.flat()[k] == -y.residuals.flat()[k]);
  const auto sub = x.restrict({5, 9});
  CHECK(sub.size() == 4);
  CHECK(sub.row_of(7) == 2);
  CHECK_THROWS_AS(sub.row_of(9), std::out_of_range);
}

TEST_CASE("csv round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "relcp_core_csv";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(11);
  const auto m = testing::random_matrix(6, 3, rng);
  const std::vector<std::size_t> steps{10, 11, 12, 13, 14, 15};
  write_matrix_csv(dir / "m.csv", m, steps);
  const auto [s2, m2] = read_matrix_csv(dir / "m.csv");
  CHECK(s2 == steps);
  REQUIRE(m2.same_shape(m));
  for (std::size_t k = 0; k < m.size(); ++k) CHECK(m2.flat()[k] == m.flat()[k]);
  std::filesystem::remove_all(dir);
}

}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "relcp/intervals.hpp"
#include "support.hpp"

using namespace relcp;

namespace {

std::vector<double> profile(const QuantileGrid& g, double (*f)(double)) {
  std::vector<double> q;
  for (double l : g.levels) q.push_back(f(l));
  return q;
}

IntervalSet single(double lo, double hi, double alpha) {
  IntervalSet s;
  s.lower = Matrix<double>{{lo}};
  s.upper = Matrix<double>{{hi}};
  s.target_steps = {0};
  s.alpha = alpha;
  return s;
}

}  // namespace

TEST_SUITE("intervals") {

TEST_CASE("uniform grid") {
  const auto g = QuantileGrid::uniform(40);
  REQUIRE(g.size() == 39);
  CHECK(g.levels.front() == doctest::Approx(0.025));
  CHECK(g.levels.back() == doctest::Approx(0.975));
  CHECK(g.index_of(0.05).value() == 1);
  CHECK(g.index_of(0.95).value() == 37);
  CHECK_FALSE(g.index_of(0.051).has_value());
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(g.levels[k] + g.levels[g.size() - 1 - k] == doctest::Approx(1.0));
  QuantileGrid bad{{0.2, 0.1}};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("plain interval examples") {
  const auto g = QuantileGrid::uniform(40);
  std::vector<double> q(39, 0.0);
  q[1] = -2.0;
  q[37] = 3.0;
  auto iv = build_interval(10.0, q, g, 0.1);
  CHECK(iv.lower == 8.0);
  CHECK(iv.upper == 13.0);
  q[1] = -1.5;
  q[37] = 1.5;
  iv = build_interval(4.0, q, g, 0.1);
  CHECK(iv.width() == doctest::Approx(3.0));
  CHECK((iv.lower + iv.upper) / 2 == doctest::Approx(4.0));
  q[1] = q[37] = 0.0;
  iv = build_interval(4.0, q, g, 0.1);
  CHECK(iv.width() == 0.0);
  // alpha = 0.07 puts 0.035 off the grid.
  CHECK_THROWS(build_interval(0.0, q, g, 0.07));
  CHECK_NOTHROW(build_interval(0.0, q, g, 0.07, true));
}

TEST_CASE("interpolation between grid levels") {
  const auto g = QuantileGrid::uniform(4);  // 0.25, 0.5, 0.75
  const std::vector<double> q{1.0, 2.0, 4.0};
  CHECK(g.interpolate(q, 0.5) == 2.0);
  CHECK(g.interpolate(q, 0.625) == doctest::Approx(3.0));
  CHECK_THROWS_AS(g.interpolate(q, 0.1), std::out_of_range);
}

TEST_CASE("beta shift on equal spacing keeps beta = 0") {
  const auto g = QuantileGrid::uniform(40);
  const auto q = profile(g, [](double l) { return 3.0 * l - 1.0; });
  const auto b = build_interval_beta(0.0, q, g, 0.1);
  CHECK(b.beta == 0.0);
  CHECK_FALSE(b.fallback);
  const auto p = build_interval(0.0, q, g, 0.1);
  CHECK(b.interval.lower == p.lower);
  CHECK(b.interval.upper == p.upper);
}

TEST_CASE("beta enumeration on the 40-division grid") {
  // Admissible shifts for alpha = 0.1 are -0.025, 0, 0.025.
  const auto g = QuantileGrid::uniform(40);
  // Convex profile: widths shrink as beta decreases.
  const auto right_skew = profile(g, [](double l) { return std::exp(4.0 * l); });
  auto b = build_interval_beta(0.0, right_skew, g, 0.1);
  CHECK(b.beta == doctest::Approx(-0.025));
  const double plain = build_interval(0.0, right_skew, g, 0.1).width();
  CHECK(b.interval.width() < plain);
  CHECK(b.interval.lower == doctest::Approx(std::exp(4.0 * 0.025)));
  CHECK(b.interval.upper == doctest::Approx(std::exp(4.0 * 0.925)));

  // Concave profile: the narrowest pair is the upward shift.
  const auto left_skew = profile(g, [](double l) { return -std::exp(-4.0 * l); });
  b = build_interval_beta(0.0, left_skew, g, 0.1);
  CHECK(b.beta == doctest::Approx(0.025));

  // alpha = 0.2: shifts -0.075 .. 0.075 are admissible.
  b = build_interval_beta(0.0, right_skew, g, 0.2);
  CHECK(b.beta == doctest::Approx(-0.075));
}

TEST_CASE("beta falls back when no shift is admissible") {
  // 0.05 is off the grid and no shift lands both levels on it.
  const QuantileGrid g{{0.04, 0.5, 0.96}};
  const std::vector<double> q{-1.0, 0.0, 1.0};
  const auto b = build_interval_beta(0.0, q, g, 0.1);
  CHECK(b.fallback);
  CHECK(b.interval.lower == doctest::Approx(-1.0 + 0.01 / 0.46));
  CHECK(b.interval.upper == doctest::Approx(1.0 - 0.01 / 0.46));
}

TEST_CASE("beta never widens when beta = 0 is admissible") {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(1.0);
  const auto g = QuantileGrid::uniform(40);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> q(39);
    double acc = -5.0;
    for (auto& v : q) v = acc += e(rng);
    CHECK(build_interval_beta(0.0, q, g, 0.1).interval.width() <= build_interval(0.0, q, g, 0.1).width());
  }
}

TEST_CASE("delta cov examples") {
  IntervalSet s;
  s.alpha = 0.1;
  s.lower = Matrix<double>(10, 1, 0.0);
  s.upper = Matrix<double>(10, 1, 1.0);
  s.target_steps.resize(10);
  Matrix<double> x(10, 1, 0.5);
  CHECK(delta_cov(s, x) == doctest::Approx(10.0));
  x.fill(2.0);
  CHECK(delta_cov(s, x) == doctest::Approx(-90.0));
  for (std::size_t t = 0; t < 9; ++t) x(t, 0) = t % 2 ? 0.0 : 1.0;  // closed bounds count
  CHECK(delta_cov(s, x) == doctest::Approx(0.0));
}

TEST_CASE("width and winkler examples") {
  CHECK(pi_width(single(8, 13, 0.1)) == 5.0);
  CHECK(pi_width(single(3, 3, 0.1)) == 0.0);
  IntervalSet two;
  two.lower = Matrix<double>{{0.0, 0.0}};
  two.upper = Matrix<double>{{2.0, 4.0}};
  two.target_steps = {0};
  CHECK(pi_width(two) == 3.0);

  CHECK(winkler_score(4, 6, 5, 0.3) == 2.0);
  CHECK(winkler_score(4, 6, 3, 0.1) == doctest::Approx(22.0));
  CHECK(winkler_score(4, 6, 7, 0.2) == doctest::Approx(12.0));
  CHECK(winkler(single(4, 6, 0.1), Matrix<double>{{3.0}}) == doctest::Approx(22.0));
}

TEST_CASE("metric invariants on random instances") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.02, 0.5);
  for (int rep = 0; rep < 200; ++rep) {
    const double alpha = u(rng);
    auto lo = testing::random_matrix(20, 5, rng);
    auto w = testing::random_matrix(20, 5, rng);
    IntervalSet s;
    s.alpha = alpha;
    s.lower = lo;
    s.upper = lo;
    for (std::size_t k = 0; k < w.size(); ++k) s.upper.flat()[k] += std::abs(w.flat()[k]);
    s.target_steps.resize(20);
    const auto x = testing::random_matrix(20, 5, rng);
    const double wk = winkler(s, x), pw = pi_width(s);
    CHECK(wk >= pw);
    const double dc = delta_cov(s, x);
    CHECK(dc >= -100.0 * (1 - alpha) - 1e-9);
    CHECK(dc <= 100.0 * alpha + 1e-9);
    if (dc == doctest::Approx(100.0 * alpha)) CHECK(wk == doctest::Approx(pw));
    else CHECK(wk > pw);

    // Permuting nodes leaves the aggregates unchanged.
    IntervalSet p = s;
    Matrix<double> xp = x;
    for (std::size_t t = 0; t < 20; ++t)
      for (std::size_t i = 0; i < 5; ++i) {
        p.lower(t, i) = s.lower(19 - t, 4 - i);
        p.upper(t, i) = s.upper(19 - t, 4 - i);
        xp(t, i) = x(19 - t, 4 - i);
      }
    CHECK(winkler(p, xp) == doctest::Approx(wk));
    CHECK(delta_cov(p, xp) == doctest::Approx(dc));
    CHECK(pi_width(p) == doctest::Approx(pw));
  }
}

TEST_CASE("unbounded and disjoint intervals hit the coverage extremes") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(delta_cov(single(-inf, inf, 0.1), Matrix<double>{{3.0}}) == doctest::Approx(10.0));
  CHECK(delta_cov(single(5.0, 5.0, 0.1), Matrix<double>{{3.0}}) == doctest::Approx(-90.0));
}

TEST_CASE("metric report serialization") {
  IntervalSet s = single(0, 1, 0.1);
  auto r = evaluate_intervals(s, Matrix<double>{{0.5}});
  r.method = "scp";
  r.dataset = "gpvar";
  r.base_model = "rnn";
  r.seed = 4;
  const auto back = MetricReport::from_json(r.to_json());
  CHECK(back.method == "scp");
  CHECK(back.winkler == r.winkler);
  CHECK(back.per_node.size() == 1);
  CHECK(MetricReport::csv_header() == "method,dataset,base_model,alpha,delta_cov,pi_width,winkler,seed");
  CHECK(r.csv_row().rfind("scp,gpvar,rnn,", 0) == 0);
}

}

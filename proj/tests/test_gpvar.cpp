#include <doctest.h>

#include <cmath>

#include "relcp/errors.hpp"
#include "relcp/gpvar.hpp"

using namespace relcp;
using namespace relcp::gpvar;

TEST_SUITE("gpvar") {

TEST_CASE("community graph edge counts") {
  CHECK(community_graph(4, 1).edge_count() == 6);
  CHECK(community_graph(4, 2).edge_count() == 4);
  // 5 cliques of 12 (66 edges each) plus 5 ring bridges.
  const auto g = community_graph(60, 5);
  CHECK(g.edge_count() == 5 * 66 + 5);
  CHECK(g.is_symmetric());
  CHECK(g.is_connected());
  for (std::size_t i = 0; i < 60; ++i) CHECK(g.adjacency(i, i) == 0.0);
  CHECK_THROWS_AS(community_graph(10, 3), std::invalid_argument);
  CHECK_THROWS_AS(community_graph(10, 0), std::invalid_argument);
}

TEST_CASE("two communities of two are joined in a ring") {
  const auto g = community_graph(4, 2);
  CHECK(g.adjacency(0, 1) == 1.0);
  CHECK(g.adjacency(2, 3) == 1.0);
  CHECK(g.adjacency(1, 2) == 1.0);
  CHECK(g.adjacency(3, 0) == 1.0);
  CHECK(g.adjacency(0, 2) == 0.0);
}

TEST_CASE("symmetric normalization examples") {
  Graph pair{Matrix<double>{{0, 1}, {1, 0}}, std::nullopt};
  auto p = *normalize_propagation(pair).propagation;
  CHECK(p(0, 1) == doctest::Approx(1.0));
  CHECK(p(0, 0) == 0.0);

  Graph tri{Matrix<double>{{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}, std::nullopt};
  p = *normalize_propagation(tri).propagation;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(p(i, j) == doctest::Approx(i == j ? 0.0 : 0.5));

  Graph iso{Matrix<double>{{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}, std::nullopt};
  p = *normalize_propagation(iso).propagation;
  for (std::size_t j = 0; j < 3; ++j) CHECK(p(2, j) == 0.0);
}

TEST_CASE("one step by hand") {
  Graph g{Matrix<double>{{0, 1}, {1, 0}}, std::nullopt};
  GPVARParams params;
  params.theta = Matrix<double>{{1.0}};
  params.a = 1.0;
  params.b = 0.0;
  params.sigma = 0.0;
  const auto sim = simulate(params, g, 2, 0, 1, Matrix<double>{{1.0, 0.0}});
  const auto& x = sim.series.values();
  CHECK(x(1, 0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
  CHECK(x(1, 0) == doctest::Approx(0.7616).epsilon(1e-4));
  CHECK(x(1, 1) == 0.0);
}

TEST_CASE("zero filter with zero state stays at zero") {
  const auto g = community_graph(6, 2);
  GPVARParams params = GPVARParams::benchmark();
  params.theta.fill(0.0);
  params.sigma = 0.0;
  const auto sim = simulate(params, g, 50, 10, 3, Matrix<double>(2, 6, 0.0));
  for (double v : sim.series.values().flat()) CHECK(v == 0.0);
}

TEST_CASE("benchmark parameters") {
  const auto p = GPVARParams::benchmark();
  CHECK(p.theta == Matrix<double>{{2.5, -2.0, -0.5}, {1.0, 3.0, 0.0}});
  CHECK(p.a == 0.5);
  CHECK(p.b == 0.5);
  CHECK(p.sigma == 0.4);
}

TEST_CASE("deterministic part is bounded by |a| + |b|") {
  const auto g = community_graph(60, 5);
  const auto p = GPVARParams::benchmark();
  const auto sim = simulate(p, g, 2000, 100, 9);
  const auto& det = sim.deterministic;
  double worst = 0.0;
  for (double v : det.flat())
    if (!std::isnan(v)) worst = std::max(worst, std::abs(v));
  CHECK(worst <= std::abs(p.a) + std::abs(p.b) + 1e-12);
  CHECK(sim.series.steps() == 2000);
  CHECK(sim.series.nodes() == 60);
}

TEST_CASE("seeded simulations are reproducible") {
  const auto g = community_graph(12, 3);
  const auto p = GPVARParams::benchmark();
  const auto a = simulate(p, g, 300, 20, 42);
  const auto b = simulate(p, g, 300, 20, 42);
  const auto c = simulate(p, g, 300, 20, 43);
  CHECK(a.series.values() == b.series.values());
  CHECK_FALSE(a.series.values() == c.series.values());
}

TEST_CASE("per-node variance is stable across seeds") {
  const auto g = community_graph(60, 5);
  const auto p = GPVARParams::benchmark();
  std::vector<double> vars;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = simulate(p, g, 4000, 100, seed).series.values();
    double mean = 0.0;
    for (double v : x.flat()) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x.flat()) ss += (v - mean) * (v - mean);
    vars.push_back(ss / static_cast<double>(x.size()));
  }
  double m = 0.0;
  for (double v : vars) m += v;
  m /= 5.0;
  double sd = 0.0;
  for (double v : vars) sd += (v - m) * (v - m);
  sd = std::sqrt(sd / 4.0);
  CHECK(std::isfinite(m));
  CHECK(sd / m < 0.10);
}

TEST_CASE("sidecar round trip") {
  const auto g = community_graph(8, 2);
  auto p = GPVARParams::benchmark();
  const auto j = sidecar_json(p, g, 100, 10, 5, 2);
  const auto q = params_from_json(j.at("params"));
  CHECK(q.theta == p.theta);
  CHECK(q.sigma == p.sigma);
  CHECK(q.propagation == p.propagation);
}

}

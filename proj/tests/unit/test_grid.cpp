#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "stabdro/grid.hpp"
#include "stabdro/network_io.hpp"

using namespace stabdro;

namespace {

GridModel chain3() {
  GridModel g;
  g.buses = {1, 2, 3};
  g.branches = {{1, 2, 0.1}, {2, 3, 0.2}};
  g.sources = {{3, 0.05, SourceKind::kSynchronous, "SG"}};
  g.gfl = {{1, 1.0, 1.0, "W"}};
  return g;
}

/// Connected random network: a spanning tree plus a few chords.
GridModel random_network(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  GridModel g;
  for (int i = 1; i <= n; ++i) g.buses.push_back(i);
  for (int i = 2; i <= n; ++i) g.branches.push_back({1 + static_cast<int>((i - 1) * u01(rng)), i, 0.05 + 0.3 * u01(rng)});
  for (int e = 0; e < n / 2; ++e) {
    const int a = 1 + static_cast<int>(n * u01(rng)), b = 1 + static_cast<int>(n * u01(rng));
    if (a != b) g.branches.push_back({a, b, 0.05 + 0.3 * u01(rng)});
  }
  g.sources.push_back({n, 0.1 + 0.3 * u01(rng), SourceKind::kSynchronous, "S"});
  g.gfl.push_back({1, 1.0, 1.0, "W1"});
  if (n > 3) g.gfl.push_back({2, 1.0, 1.0, "W2"});
  return g;
}

}  // namespace

TEST_CASE("grid: admittance assembly") {
  GridModel g;
  g.buses = {1, 2};
  g.branches = {{1, 2, 0.5}};
  auto y = build_admittance<double>(g, {}, {}).y;
  CHECK(y(0, 0) == 2.0);
  CHECK(y(0, 1) == -2.0);
  CHECK(y(1, 1) == 2.0);

  g.sources = {{2, 0.25, SourceKind::kSynchronous, "SG"}};
  CHECK(build_admittance<double>(g, {1}, {0.25}).y(1, 1) == 6.0);
  CHECK(build_admittance<double>(g, {0}, {0.25}).y(1, 1) == 2.0);

  const auto c = chain3();
  Eigen::Matrix3d hand;
  hand << 10, -10, 0, -10, 15, -5, 0, -5, 5 + 20;
  CHECK((build_admittance<double>(c, {1}, {0.05}).y - hand).cwiseAbs().maxCoeff() < 1e-12);

  g.branches.push_back({1, 2, 0.5});
  CHECK(build_admittance<double>(g, {0}, {0.25}).y(0, 1) == -4.0);
  CHECK_THROWS_AS(build_admittance<double>(g, {1}, {0.0}), InvalidModelError);
}

TEST_CASE("grid: kron reduction") {
  const auto c = chain3();
  const Eigen::MatrixXd y = build_admittance<double>(c, {1}, {0.05}).y;
  CHECK(kron_reduce<double>(y, {0, 1, 2}).y_red == y);

  const auto r = kron_reduce<double>(y, {0});
  const Eigen::Vector2d b(y(0, 1), y(0, 2));
  const Eigen::Matrix2d d = y.bottomRightCorner(2, 2);
  CHECK(r.y_red(0, 0) == doctest::Approx(y(0, 0) - b.dot(d.inverse() * b)).epsilon(1e-12));

  // buses 3 and 4 form an island with no source
  GridModel island;
  island.buses = {1, 2, 3, 4};
  island.branches = {{1, 2, 0.1}, {3, 4, 0.1}};
  const Eigen::MatrixXd open = build_admittance<double>(island, {}, {}).y;
  try {
    kron_reduce<double>(open, {0}, island.buses);
    FAIL("expected a singular reduction");
  } catch (const ReductionSingularError& e) {
    CHECK(e.buses() == std::vector<int>{3, 4});
  }
}

TEST_CASE("grid: kron injection equivalence on random networks") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 6;
    const auto g = random_network(rng, n);
    const Eigen::MatrixXd y = build_admittance<double>(g, {1}, g.nominal_reactances()).y;
    const std::vector<int> keep = n > 3 ? std::vector<int>{0, 1} : std::vector<int>{0};
    const auto r = kron_reduce<double>(y, keep);
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(n), inj_red(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) inj(keep[k]) = inj_red(k) = normal(rng);
    const Eigen::VectorXd v_full = y.ldlt().solve(inj);
    const Eigen::VectorXd v_red = r.y_red.ldlt().solve(inj_red);
    for (std::size_t k = 0; k < keep.size(); ++k) worst = std::max(worst, std::abs(v_full(keep[k]) - v_red(k)));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("grid: index value, scaling and eigenpairs") {
  Eigen::MatrixXd y1(1, 1);
  y1 << 3.0;
  CHECK(gscr_index<double>(y1, {1.0}, {0.5}).value == doctest::Approx(6.0));
  CHECK_THROWS_AS(gscr_index<double>(y1, {1.0}, {0.0}), InvalidOperatingPointError);

  const auto desk = load_grid(fixtures::data_path("desk_network.json"));
  OperatingPoint op{{1, 1, 1, 1}, desk.nominal_reactances(), split_wind(desk, 1.3)};
  const auto ev = evaluate_index(desk, op);
  REQUIRE(ev.has_gfl);
  const auto& m = ev.gscr.scaled;
  REQUIRE(m.rows() == 2);
  // smaller root of the characteristic polynomial
  const double tr = m.trace(), det = m.determinant();
  CHECK(ev.value == doctest::Approx((tr - std::sqrt(tr * tr - 4 * det)) / 2).epsilon(1e-9));
  CHECK(ev.value > 0.0);
  CHECK((m * ev.gscr.right - ev.value * ev.gscr.right).norm() <= 1e-8);
  CHECK((ev.gscr.left.transpose() * m - ev.value * ev.gscr.left.transpose()).norm() <= 1e-8);
  CHECK(ev.gscr.left.dot(ev.gscr.right) == doctest::Approx(1.0).epsilon(1e-12));

  for (double alpha : {0.5, 2.0, 10.0}) {
    auto scaled = op;
    for (auto& p : scaled.gfl_power) p *= alpha;
    CHECK(std::abs(evaluate_index(desk, scaled).value * alpha - ev.value) <= 1e-10);
  }

  auto idle = op;
  idle.gfl_power = split_wind(desk, 0.0);
  CHECK(std::isinf(evaluate_index(desk, idle).value));
}

TEST_CASE("grid: reactance derivative of the passive block") {
  const auto c = chain3();
  OperatingPoint op{{1}, {0.05}, {1.0}};
  const auto d = d_ydd_dxg<double>(c, op, 0, {1, 2});
  CHECK(Eigen::MatrixXd(d)(1, 1) == doctest::Approx(-400.0));
  op.commitment = {0};
  CHECK(Eigen::MatrixXd(d_ydd_dxg<double>(c, op, 0, {1, 2})).isZero());
  CHECK_THROWS_AS(d_ydd_dxg<double>(c, op, 0, {0, 1}), UnsupportedPlacementError);

  op.commitment = {1};
  const double h = 1e-6;
  auto ydd = [&](double x) { return Eigen::MatrixXd(build_admittance<double>(c, {1}, {x}).y.bottomRightCorner(2, 2)); };
  const Eigen::MatrixXd fd = (ydd(0.05 + h) - ydd(0.05 - h)) / (2 * h);
  CHECK((fd - Eigen::MatrixXd(d)).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("grid: json round trip and validation") {
  const auto desk = load_grid(fixtures::data_path("desk_network.json"));
  CHECK(grid_to_json(grid_from_json(grid_to_json(desk))) == grid_to_json(desk));
  auto j = grid_to_json(desk);
  j["branches"][0]["x"] = -1.0;
  CHECK_THROWS_AS(grid_from_json(j), InvalidModelError);
  CHECK_THROWS_AS(load_grid("/nonexistent/network.json"), InputError);
}

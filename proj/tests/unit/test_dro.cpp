#include <doctest.h>

#include <random>

#include "stabdro/dro.hpp"

using namespace stabdro;

TEST_CASE("dro: k_eta values and domain") {
  CHECK(k_eta(0.5) == 1.0);
  CHECK(k_eta(0.9) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(k_eta(0.875, true) == 2.0);
  double prev = 0.0;
  for (double eta = 0.01; eta < 1.0; eta += 0.01) {
    CHECK(k_eta(eta) > prev);
    prev = k_eta(eta);
  }
  CHECK_THROWS_AS(k_eta(0.0), DomainError);
  CHECK_THROWS_AS(k_eta(1.0), DomainError);
  CHECK_THROWS_AS(k_eta(0.4, true), DomainError);
}

TEST_CASE("dro: spectral factors") {
  const auto id = spectral_factorize<double>(Eigen::Matrix2d::Identity());
  CHECK(id.tau == Eigen::Vector2d(1, 1));
  CHECK((id.q.transpose() * id.q - Eigen::Matrix2d::Identity()).norm() <= 1e-14);

  const Eigen::Vector3d u(1, 2, 2);
  const auto r1 = spectral_factorize<double>(u * u.transpose());
  CHECK(r1.tau(2) == doctest::Approx(9.0));
  CHECK(std::abs(r1.tau(0)) <= 1e-12);
  CHECK(std::abs(std::abs(r1.q.col(2).dot(u / 3.0)) - 1.0) <= 1e-12);

  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(5, 5, [&] { return normal(rng); });
  const Eigen::MatrixXd s = b * b.transpose();
  const auto f = spectral_factorize<double>(s);
  CHECK((f.q * f.tau.asDiagonal() * f.q.transpose() - s).norm() <= 1e-10);

  Eigen::Matrix2d tiny_neg;
  tiny_neg << 1, 0, 0, -1e-10;
  CHECK(spectral_factorize<double>(tiny_neg).tau.minCoeff() == 0.0);
  tiny_neg(1, 1) = -1e-3;
  CHECK_THROWS_AS(spectral_factorize<double>(tiny_neg), InvalidCovarianceError);
}

TEST_CASE("dro: constraint evaluation") {
  const Eigen::Vector2d mu(2, 1);
  const Eigen::Matrix2d sigma = Eigen::Vector2d(0.04, 0.01).asDiagonal();
  const auto c = make_soc_constraint<double>(mu, sigma, 2.0, 0.8);
  const auto ev = evaluate_soc(c, Eigen::Vector2d(1, 1));
  CHECK(ev.lhs == doctest::Approx(std::sqrt(0.05)).epsilon(1e-14));
  CHECK(ev.rhs == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(ev.satisfied);

  const auto det = make_soc_constraint<double>(mu, Eigen::Matrix2d::Zero(), 2.0, 0.8);
  CHECK(evaluate_soc(det, Eigen::Vector2d(1, 0)).satisfied);  // mu'X = 2 = g_lim
  CHECK_FALSE(evaluate_soc(det, Eigen::Vector2d(0.9, 0)).satisfied);

  // factorized and direct forms agree
  std::mt19937_64 rng(10);
  std::normal_distribution<double> normal;
  const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return normal(rng); });
  const Eigen::MatrixXd s = b * b.transpose();
  const auto cc = make_soc_constraint<double>(Eigen::Vector4d(3, 1, 2, 1), s, 1.0, 0.8);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector4d x = Eigen::Vector4d::NullaryExpr([&] { return normal(rng); });
    const auto e = evaluate_soc(cc, x);
    CHECK(e.lhs == doctest::Approx(std::sqrt(x.dot(s * x))).epsilon(1e-9));
    CHECK(e.satisfied == (cc.k() * std::sqrt(x.dot(s * x)) <= cc.mu.dot(x) - 1.0 + 1e-9 * (1 + std::abs(e.rhs))));
  }
}

TEST_CASE("dro: equivalent limit") {
  const Eigen::Vector2d mu(2, 1);
  const Eigen::Matrix2d sigma = Eigen::Vector2d(0.04, 0.01).asDiagonal();
  const std::vector<Eigen::VectorXd> sched{Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 0.5)};
  CHECK(equivalent_limit(make_soc_constraint<double>(mu, Eigen::Matrix2d::Zero(), 2.0, 0.8), sched) == 2.0);
  const double base = equivalent_limit(make_soc_constraint<double>(mu, sigma, 2.0, 0.8), sched) - 2.0;
  const double doubled = equivalent_limit(make_soc_constraint<double>(mu, Eigen::Matrix2d(2 * sigma), 2.0, 0.8), sched) - 2.0;
  CHECK(doubled == doctest::Approx(std::sqrt(2.0) * base).epsilon(1e-12));
  double prev = 0.0;
  for (double eta : {0.55, 0.7, 0.8, 0.9, 0.95}) {
    const double v = equivalent_limit(make_soc_constraint<double>(mu, sigma, 2.0, eta), sched);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(equivalent_limit(make_soc_constraint<double>(mu, sigma, 2.0, 0.8), {}), Error);
}

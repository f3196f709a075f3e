#pragma once

// Moment-based distributionally robust stability constraint
//
//   k_eta * sqrt(X' Sigma_K X) <= mu_K' X - g_lim
//
// written as a second-order cone through the spectral factors of Sigma_K.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "stabdro/error.hpp"
#include "stabdro/grid.hpp"

namespace stabdro {

/// Multiplier of the robust buffer. The general form holds for every
/// distribution with the given mean and covariance; the symmetric form needs a
/// centrally symmetric distribution and eta >= 0.5.
template <typename Scalar = double>
Scalar k_eta(Scalar eta, bool symmetric = false) {
  if (!(eta > Scalar(0) && eta < Scalar(1))) {
    throw DomainError("confidence level must lie in (0, 1)");
  }
  if (symmetric) {
    if (eta < Scalar(0.5)) throw DomainError("symmetric k_eta requires eta >= 0.5");
    return std::sqrt(Scalar(1) / (Scalar(2) * (Scalar(1) - eta)));
  }
  return std::sqrt(eta / (Scalar(1) - eta));
}

template <typename Scalar>
struct SpectralFactors {
  Vec<Scalar> tau;  ///< eigenvalues, ascending, clipped at zero
  Mat<Scalar> q;    ///< orthonormal eigenvectors, one per column
};

/// Eigen-decomposition of a covariance with round-off repair: eigenvalues in
/// [-1e-8, 0) become 0, anything more negative is rejected.
template <typename Scalar>
SpectralFactors<Scalar> spectral_factorize(const Mat<Scalar>& sigma, Scalar repair_tol = Scalar(1e-8)) {
  if (sigma.rows() != sigma.cols()) throw InvalidCovarianceError("covariance must be square");
  const Scalar asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  const Scalar scale = std::max(Scalar(1), sigma.cwiseAbs().maxCoeff());
  if (asym > Scalar(1e-9) * scale) throw InvalidCovarianceError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es((sigma + sigma.transpose()) / Scalar(2));
  SpectralFactors<Scalar> out;
  out.tau = es.eigenvalues();
  out.q = es.eigenvectors();
  for (Eigen::Index i = 0; i < out.tau.size(); ++i) {
    if (out.tau(i) < -repair_tol) {
      throw InvalidCovarianceError("covariance has eigenvalue " + std::to_string(static_cast<double>(out.tau(i))));
    }
    if (out.tau(i) < Scalar(0)) out.tau(i) = Scalar(0);
  }
  return out;
}

template <typename Scalar = double>
struct SocStabilityConstraint {
  Vec<Scalar> mu;
  Vec<Scalar> tau;
  Mat<Scalar> q;
  Scalar g_lim = Scalar(0);
  Scalar eta = Scalar(0.5);
  bool symmetric = false;

  Scalar k() const { return k_eta<Scalar>(eta, symmetric); }

  /// sum_i tau_i q_i q_i'
  Mat<Scalar> covariance() const { return q * tau.asDiagonal() * q.transpose(); }

  /// Rows sqrt(tau_i) q_i' for the nonzero factors.
  Mat<Scalar> factor_rows() const {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < tau.size(); ++i) {
      if (tau(i) > Scalar(0)) keep.push_back(i);
    }
    Mat<Scalar> f(static_cast<Eigen::Index>(keep.size()), mu.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      f.row(static_cast<Eigen::Index>(r)) = std::sqrt(tau(keep[r])) * q.col(keep[r]).transpose();
    }
    return f;
  }
};

template <typename Scalar>
SocStabilityConstraint<Scalar> make_soc_constraint(const Vec<Scalar>& mu, const Mat<Scalar>& sigma, Scalar g_lim,
                                                   Scalar eta, bool symmetric = false) {
  if (sigma.rows() != mu.size()) throw InvalidCovarianceError("mean and covariance dimensions differ");
  k_eta<Scalar>(eta, symmetric);
  auto factors = spectral_factorize<Scalar>(sigma);
  SocStabilityConstraint<Scalar> c;
  c.mu = mu;
  c.tau = factors.tau;
  c.q = factors.q;
  c.g_lim = g_lim;
  c.eta = eta;
  c.symmetric = symmetric;
  return c;
}

template <typename Scalar>
struct SocEvaluation {
  Scalar lhs = Scalar(0);  ///< ||[sqrt(tau_i) q_i' X]||
  Scalar rhs = Scalar(0);  ///< (mu' X - g_lim) / k_eta
  bool satisfied = false;
  Scalar margin = Scalar(0);  ///< rhs - lhs
};

template <typename Scalar, typename Derived>
SocEvaluation<Scalar> evaluate_soc(const SocStabilityConstraint<Scalar>& c, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != c.mu.size()) throw Error("decision vector dimension does not match the constraint");
  SocEvaluation<Scalar> out;
  Scalar sq = Scalar(0);
  for (Eigen::Index i = 0; i < c.tau.size(); ++i) {
    const Scalar t = std::sqrt(c.tau(i)) * c.q.col(i).dot(x);
    sq += t * t;
  }
  out.lhs = std::sqrt(sq);
  out.rhs = (c.mu.dot(x) - c.g_lim) / c.k();
  out.satisfied = out.lhs <= out.rhs;
  out.margin = out.rhs - out.lhs;
  return out;
}

/// Averaged equivalent limit: mean over steps of g_lim + k_eta ||[sqrt(tau_i) q_i' X(t)]||.
template <typename Scalar>
Scalar equivalent_limit(const SocStabilityConstraint<Scalar>& c, const std::vector<Vec<Scalar>>& schedule) {
  if (schedule.empty()) throw Error("equivalent limit needs a nonempty schedule");
  const Scalar k = c.k();
  Scalar total = Scalar(0);
  for (const auto& x : schedule) total += c.g_lim + k * evaluate_soc(c, x).lhs;
  return total / Scalar(schedule.size());
}

}  // namespace stabdro

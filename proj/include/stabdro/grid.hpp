#pragma once

// Lossless network model: admittance assembly, Kron reduction and the
// generalized short-circuit ratio (smallest eigenvalue of the power-scaled
// reduced admittance matrix).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stabdro/error.hpp"

namespace stabdro {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct Branch {
  int from = 0;
  int to = 0;
  double reactance = 0.0;
};

enum class SourceKind { kSynchronous, kGridForming };

/// Synchronous generator or grid-forming inverter behind an internal
/// reactance. Sources are ordered SGs first, then GFM units.
struct Source {
  int bus = 0;
  double reactance = 0.0;
  SourceKind kind = SourceKind::kSynchronous;
  std::string name;
};

/// Grid-following inverter. `capacity` (per-unit) sets its share of the
/// total wind output.
struct GflUnit {
  int bus = 0;
  double voltage = 1.0;
  double capacity = 1.0;
  std::string name;
};

struct GridModel {
  std::vector<int> buses;
  std::vector<Branch> branches;
  std::vector<Source> sources;
  std::vector<GflUnit> gfl;

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_sources() const { return static_cast<int>(sources.size()); }

  /// Position of a bus id in `buses`; throws on unknown ids.
  int bus_index(int id) const {
    auto it = std::find(buses.begin(), buses.end(), id);
    if (it == buses.end()) {
      throw InvalidModelError("unknown bus id " + std::to_string(id));
    }
    return static_cast<int>(it - buses.begin());
  }

  double total_gfl_capacity() const {
    double total = 0.0;
    for (const auto& u : gfl) total += u.capacity;
    return total;
  }

  std::vector<double> nominal_reactances() const {
    std::vector<double> x;
    for (const auto& s : sources) x.push_back(s.reactance);
    return x;
  }

  /// Checks the structural invariants; throws InvalidModelError.
  void validate() const {
    std::vector<int> sorted = buses;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidModelError("duplicate bus ids");
    }
    for (const auto& b : branches) {
      bus_index(b.from);
      bus_index(b.to);
      if (!(b.reactance > 0.0)) {
        throw InvalidModelError("branch " + std::to_string(b.from) + "-" +
                                std::to_string(b.to) + " has nonpositive reactance");
      }
      if (b.from == b.to) throw InvalidModelError("branch is a self loop");
    }
    for (const auto& s : sources) {
      bus_index(s.bus);
      if (!(s.reactance > 0.0)) {
        throw InvalidModelError("source at bus " + std::to_string(s.bus) +
                                " has nonpositive reactance");
      }
    }
    std::vector<int> gfl_buses;
    for (const auto& u : gfl) {
      bus_index(u.bus);
      if (!(u.voltage > 0.0) || !(u.capacity > 0.0)) {
        throw InvalidModelError("GFL unit at bus " + std::to_string(u.bus) +
                                " needs positive voltage and capacity");
      }
      gfl_buses.push_back(u.bus);
    }
    std::sort(gfl_buses.begin(), gfl_buses.end());
    if (std::adjacent_find(gfl_buses.begin(), gfl_buses.end()) != gfl_buses.end()) {
      throw InvalidModelError("two GFL units share a bus");
    }
  }
};

/// Per-evaluation state of the network: commitment flag and reactance of
/// every source, and active power of every GFL unit.
struct OperatingPoint {
  std::vector<int> commitment;
  std::vector<double> reactances;
  std::vector<double> gfl_power;
};

/// GFL powers below this are treated as offline for the index evaluation.
inline constexpr double kMinGflPower = 1e-6;

/// Splits a total wind output (per-unit) across GFL units by capacity.
inline std::vector<double> split_wind(const GridModel& grid, double total_wind) {
  std::vector<double> p;
  const double cap = grid.total_gfl_capacity();
  for (const auto& u : grid.gfl) p.push_back(cap > 0.0 ? total_wind * u.capacity / cap : 0.0);
  return p;
}

template <typename Scalar>
struct AdmittanceMatrix {
  Mat<Scalar> y;         ///< Y = Y0 + Yg
  Mat<Scalar> branch_y;  ///< Y0, branch Laplacian only
};

/// Assembles Y = Y0 + Yg. Parallel branches are summed.
template <typename Scalar = double>
AdmittanceMatrix<Scalar> build_admittance(const GridModel& grid, const std::vector<int>& commitment,
                                          const std::vector<double>& reactances) {
  const int n = grid.num_buses();
  if (static_cast<int>(commitment.size()) != grid.num_sources() ||
      static_cast<int>(reactances.size()) != grid.num_sources()) {
    throw InvalidModelError("commitment/reactance vectors do not match the source list");
  }
  AdmittanceMatrix<Scalar> out;
  out.branch_y = Mat<Scalar>::Zero(n, n);
  for (const auto& b : grid.branches) {
    if (!(b.reactance > 0.0)) throw InvalidModelError("nonpositive branch reactance");
    const int i = grid.bus_index(b.from);
    const int j = grid.bus_index(b.to);
    const Scalar y = Scalar(1) / Scalar(b.reactance);
    out.branch_y(i, i) += y;
    out.branch_y(j, j) += y;
    out.branch_y(i, j) -= y;
    out.branch_y(j, i) -= y;
  }
  out.y = out.branch_y;
  for (int g = 0; g < grid.num_sources(); ++g) {
    if (!(reactances[g] > 0.0)) throw InvalidModelError("nonpositive source reactance");
    if (commitment[g] != 0 && commitment[g] != 1) {
      throw InvalidModelError("commitment flags must be 0 or 1");
    }
    const int i = grid.bus_index(grid.sources[g].bus);
    out.y(i, i) += Scalar(commitment[g]) / Scalar(reactances[g]);
  }
  return out;
}

template <typename Scalar>
struct ReducedAdmittance {
  Mat<Scalar> y_red;
  std::vector<int> retained;  ///< bus positions kept, in order
  std::vector<int> eliminated;
};

namespace detail {

inline std::vector<int> complement(int n, const std::vector<int>& keep) {
  std::vector<char> mark(n, 0);
  for (int k : keep) mark[k] = 1;
  std::vector<int> rest;
  for (int i = 0; i < n; ++i) {
    if (!mark[i]) rest.push_back(i);
  }
  return rest;
}

template <typename Scalar>
Mat<Scalar> submatrix(const Mat<Scalar>& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Mat<Scalar> out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  }
  return out;
}

/// Components of the passive block whose entries sum to zero: no source and no
/// branch to a retained bus, so the block is singular there.
template <typename Scalar>
std::vector<int> ungrounded_positions(const Mat<Scalar>& ydd) {
  const int n = static_cast<int>(ydd.rows());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (ydd(i, j) != Scalar(0)) parent[find(i)] = find(j);
    }
  }
  std::vector<Scalar> block_sum(n, Scalar(0));
  std::vector<Scalar> block_scale(n, Scalar(0));
  for (int i = 0; i < n; ++i) {
    block_sum[find(i)] += ydd.row(i).sum();
    block_scale[find(i)] += std::abs(ydd(i, i));
  }
  std::vector<int> bad;
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (std::abs(block_sum[r]) <= Scalar(1e-10) * std::max(Scalar(1), block_scale[r])) bad.push_back(i);
  }
  return bad;
}

}  // namespace detail

/// Schur complement of the passive block: Y_red = Y_LL - Y_Ld Y_dd^-1 Y_dL.
/// `bus_ids` only labels buses in the error message.
template <typename Scalar>
ReducedAdmittance<Scalar> kron_reduce(const Mat<Scalar>& y, const std::vector<int>& retained,
                                      const std::vector<int>& bus_ids = {}) {
  const int n = static_cast<int>(y.rows());
  ReducedAdmittance<Scalar> out;
  out.retained = retained;
  out.eliminated = detail::complement(n, retained);
  const auto& keep = out.retained;
  const auto& elim = out.eliminated;
  Mat<Scalar> yll = detail::submatrix(y, keep, keep);
  if (elim.empty()) {
    out.y_red = yll;
    return out;
  }
  Mat<Scalar> ydd = detail::submatrix(y, elim, elim);
  auto name_buses = [&](const std::vector<int>& positions) {
    std::vector<int> ids;
    for (int p : positions) ids.push_back(bus_ids.empty() ? elim[p] : bus_ids[elim[p]]);
    return ids;
  };
  if (auto bad = detail::ungrounded_positions(ydd); !bad.empty()) {
    auto ids = name_buses(bad);
    std::ostringstream msg;
    msg << "passive block is singular; islanded buses:";
    for (int id : ids) msg << ' ' << id;
    throw ReductionSingularError(msg.str(), ids);
  }
  Eigen::LDLT<Mat<Scalar>> ldlt(ydd);
  const auto d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || d.cwiseAbs().minCoeff() < Scalar(1e-10)) {
    std::vector<int> all(elim.size());
    std::iota(all.begin(), all.end(), 0);
    throw ReductionSingularError("passive block pivot below 1e-10", name_buses(all));
  }
  Mat<Scalar> yld = detail::submatrix(y, keep, elim);
  out.y_red = yll - yld * ldlt.solve(yld.transpose());
  out.y_red = (out.y_red + out.y_red.transpose()) / Scalar(2);
  return out;
}

template <typename Scalar>
struct GscrEvaluation {
  Scalar value = Scalar(0);  ///< lambda_min of the scaled matrix
  Vec<Scalar> left;          ///< w, normalized so that w^T v = 1
  Vec<Scalar> right;         ///< v, unit norm
  Mat<Scalar> scaled;        ///< diag(V^2/P) Y_red
  Scalar gap = std::numeric_limits<Scalar>::infinity();  ///< distance to next eigenvalue
};

namespace detail {

template <typename Scalar>
std::pair<Scalar, Vec<Scalar>> smallest_real_eigenpair(const Mat<Scalar>& m, Scalar* gap) {
  Eigen::EigenSolver<Mat<Scalar>> es(m, true);
  if (es.info() != Eigen::Success) throw Error("eigensolver failed");
  const auto& ev = es.eigenvalues();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < ev.size(); ++i) {
    if (ev(i).real() < ev(best).real()) best = i;
  }
  if (gap != nullptr) {
    Scalar g = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (i != best) g = std::min<Scalar>(g, std::abs(ev(i) - ev(best)));
    }
    *gap = g;
  }
  const Scalar scale = std::max(Scalar(1), std::abs(ev(best)));
  if (std::abs(ev(best).imag()) > Scalar(1e-8) * scale) {
    throw Error("smallest eigenvalue is not real; the network is not lossless");
  }
  Vec<Scalar> vec = es.eigenvectors().col(best).real();
  return {ev(best).real(), vec};
}

}  // namespace detail

/// lambda_min of diag(V^2/P) Y_red with its left and right eigenvectors,
/// from a general real eigensolver.
template <typename Scalar>
GscrEvaluation<Scalar> gscr_index(const Mat<Scalar>& y_red, const std::vector<double>& voltage,
                                  const std::vector<double>& power) {
  const auto n = y_red.rows();
  if (static_cast<Eigen::Index>(voltage.size()) != n || static_cast<Eigen::Index>(power.size()) != n) {
    throw InvalidOperatingPointError("voltage/power vectors do not match the reduced matrix");
  }
  if (n == 0) throw InvalidOperatingPointError("no GFL unit in the evaluation");
  Vec<Scalar> scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(power[i] > 0.0)) {
      throw InvalidOperatingPointError("GFL power must be positive, got " + std::to_string(power[i]));
    }
    scale(i) = Scalar(voltage[i]) * Scalar(voltage[i]) / Scalar(power[i]);
  }
  GscrEvaluation<Scalar> out;
  out.scaled = scale.asDiagonal() * y_red;
  auto [lambda, v] = detail::smallest_real_eigenpair<Scalar>(out.scaled, &out.gap);
  Mat<Scalar> transposed = out.scaled.transpose();
  auto [lambda_left, w] = detail::smallest_real_eigenpair<Scalar>(transposed, nullptr);
  (void)lambda_left;
  v.normalize();
  const Scalar wv = w.dot(v);
  if (std::abs(wv) < Scalar(1e-14)) throw Error("left and right eigenvectors are orthogonal");
  out.value = lambda;
  out.right = v;
  out.left = w / wv;
  return out;
}

/// d(Y_dd)/dX_g: a single diagonal entry -x_g / X_g^2 at the source's bus.
template <typename Scalar = double>
Eigen::SparseMatrix<Scalar> d_ydd_dxg(const GridModel& grid, const OperatingPoint& op, int source,
                                      const std::vector<int>& eliminated) {
  const Source& s = grid.sources.at(source);
  const int pos = grid.bus_index(s.bus);
  auto it = std::find(eliminated.begin(), eliminated.end(), pos);
  if (it == eliminated.end()) {
    throw UnsupportedPlacementError("source at bus " + std::to_string(s.bus) +
                                    " sits on a GFL bus; derivative assumes sources in the passive set");
  }
  const auto n = static_cast<Eigen::Index>(eliminated.size());
  Eigen::SparseMatrix<Scalar> d(n, n);
  const double x = op.reactances.at(source);
  if (op.commitment.at(source) != 0) {
    const auto k = static_cast<Eigen::Index>(it - eliminated.begin());
    d.insert(k, k) = Scalar(-op.commitment[source]) / (Scalar(x) * Scalar(x));
  }
  d.makeCompressed();
  return d;
}

/// Everything an index evaluation produces, kept for derivative work.
struct IndexEvaluation {
  bool has_gfl = false;  ///< false when every GFL unit is below kMinGflPower
  double value = std::numeric_limits<double>::infinity();
  AdmittanceMatrix<double> admittance;
  ReducedAdmittance<double> reduced;
  GscrEvaluation<double> gscr;
  std::vector<int> gfl_units;  ///< indices into grid.gfl that were retained
};

/// Builds Y for the operating point, retains buses of GFL units with
/// P >= kMinGflPower and evaluates the index. With no GFL online the index is
/// +infinity.
inline IndexEvaluation evaluate_index(const GridModel& grid, const OperatingPoint& op) {
  IndexEvaluation out;
  out.admittance = build_admittance<double>(grid, op.commitment, op.reactances);
  std::vector<int> retained;
  std::vector<double> v, p;
  for (std::size_t c = 0; c < grid.gfl.size(); ++c) {
    if (op.gfl_power.at(c) >= kMinGflPower) {
      out.gfl_units.push_back(static_cast<int>(c));
      retained.push_back(grid.bus_index(grid.gfl[c].bus));
      v.push_back(grid.gfl[c].voltage);
      p.push_back(op.gfl_power[c]);
    }
  }
  if (retained.empty()) return out;
  out.has_gfl = true;
  out.reduced = kron_reduce<double>(out.admittance.y, retained, grid.buses);
  out.gscr = gscr_index<double>(out.reduced.y_red, v, p);
  out.value = out.gscr.value;
  return out;
}

}  // namespace stabdro

#include "stabdro/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stabdro/error.hpp"

namespace stabdro {

std::string to_string(ConicStatus s) {
  switch (s) {
    case ConicStatus::kOptimal:
      return "optimal";
    case ConicStatus::kInaccurate:
      return "inaccurate";
    case ConicStatus::kPrimalInfeasible:
      return "infeasible";
    case ConicStatus::kDualInfeasible:
      return "unbounded";
    case ConicStatus::kFailed:
      return "failed";
  }
  return "failed";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Layout {
  int l = 0;
  std::vector<int> q;
  std::vector<int> start;
  int m = 0;

  Layout(int linear, const std::vector<int>& dims) : l(linear), q(dims) {
    int pos = l;
    for (int d : q) {
      start.push_back(pos);
      pos += d;
    }
    m = pos;
  }
  int degree() const { return l + static_cast<int>(q.size()); }
};

VectorXd identity_element(const Layout& k) {
  VectorXd e = VectorXd::Zero(k.m);
  e.head(k.l).setOnes();
  for (int s : k.start) e(s) = 1.0;
  return e;
}

VectorXd circ(const Layout& k, const VectorXd& u, const VectorXd& v) {
  VectorXd w(k.m);
  w.head(k.l) = u.head(k.l).cwiseProduct(v.head(k.l));
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int s = k.start[c], d = k.q[c];
    w(s) = u.segment(s, d).dot(v.segment(s, d));
    w.segment(s + 1, d - 1) = u(s) * v.segment(s + 1, d - 1) + v(s) * u.segment(s + 1, d - 1);
  }
  return w;
}

/// x with lambda o x = d.
VectorXd inv_circ(const Layout& k, const VectorXd& lambda, const VectorXd& d) {
  VectorXd x(k.m);
  x.head(k.l) = d.head(k.l).cwiseQuotient(lambda.head(k.l));
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int s = k.start[c], n = k.q[c];
    const double l0 = lambda(s);
    const auto l1 = lambda.segment(s + 1, n - 1);
    const double det = l0 * l0 - l1.squaredNorm();
    x(s) = (l0 * d(s) - l1.dot(d.segment(s + 1, n - 1))) / det;
    x.segment(s + 1, n - 1) = (d.segment(s + 1, n - 1) - x(s) * l1) / l0;
  }
  return x;
}

/// Largest alpha with u + alpha du in the cone (u interior).
double max_step(const Layout& k, const VectorXd& u, const VectorXd& du) {
  double alpha = kInf;
  for (int i = 0; i < k.l; ++i) {
    if (du(i) < 0.0) alpha = std::min(alpha, -u(i) / du(i));
  }
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int s = k.start[c], n = k.q[c];
    const double u0 = u(s), d0 = du(s);
    const auto u1 = u.segment(s + 1, n - 1);
    const auto d1 = du.segment(s + 1, n - 1);
    const double a = d0 * d0 - d1.squaredNorm();
    const double b = u0 * d0 - u1.dot(d1);
    const double cc = std::max(u0 * u0 - u1.squaredNorm(), 0.0);
    double t = kInf;
    const double disc = std::max(b * b - a * cc, 0.0);
    const double sq = std::sqrt(disc);
    if (a > 0.0) {
      // du inside the cone (d0 > 0) never leaves; otherwise the smaller root
      if (d0 < 0.0 && b < 0.0) t = cc / (-b + sq);
    } else if (a < 0.0) {
      t = b <= 0.0 ? cc / (-b + sq) : (b + sq) / (-a);
    } else if (b < 0.0) {
      t = -cc / (2.0 * b);
    }
    if (d0 < 0.0) t = std::min(t, -u0 / d0);
    alpha = std::min(alpha, std::max(t, 0.0));
  }
  return alpha;
}

/// Shifts u into the cone interior if needed.
VectorXd shift_into_cone(const Layout& k, VectorXd u) {
  double worst = -kInf;
  for (int i = 0; i < k.l; ++i) worst = std::max(worst, -u(i));
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int s = k.start[c], n = k.q[c];
    worst = std::max(worst, u.segment(s + 1, n - 1).norm() - u(s));
  }
  if (k.m == 0 || worst < 0.0) return u;
  return u + (1.0 + worst) * identity_element(k);
}

struct Scaling {
  VectorXd d;  // orthant part of W
  std::vector<MatrixXd> w, winv;
  VectorXd lambda;
};

Scaling nt_scaling(const Layout& k, const VectorXd& s, const VectorXd& z) {
  Scaling sc;
  sc.d = (s.head(k.l).array() / z.head(k.l).array()).sqrt();
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int st = k.start[c], n = k.q[c];
    VectorXd sv = s.segment(st, n), zv = z.segment(st, n);
    const double sjs = std::max(sv(0) * sv(0) - sv.tail(n - 1).squaredNorm(), 1e-300);
    const double zjz = std::max(zv(0) * zv(0) - zv.tail(n - 1).squaredNorm(), 1e-300);
    const VectorXd sb = sv / std::sqrt(sjs);
    const VectorXd zb = zv / std::sqrt(zjz);
    const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    VectorXd wb(n);
    wb(0) = (sb(0) + zb(0)) / (2.0 * gamma);
    wb.tail(n - 1) = (sb.tail(n - 1) - zb.tail(n - 1)) / (2.0 * gamma);
    const double beta = std::pow(sjs / zjz, 0.25);
    MatrixXd w(n, n), wi(n, n);
    const VectorXd w1 = wb.tail(n - 1);
    const MatrixXd block = MatrixXd::Identity(n - 1, n - 1) + w1 * w1.transpose() / (1.0 + wb(0));
    w(0, 0) = wb(0);
    w.block(0, 1, 1, n - 1) = w1.transpose();
    w.block(1, 0, n - 1, 1) = w1;
    w.bottomRightCorner(n - 1, n - 1) = block;
    wi = w;
    wi.block(0, 1, 1, n - 1) = -w1.transpose();
    wi.block(1, 0, n - 1, 1) = -w1;
    sc.w.push_back(beta * w);
    sc.winv.push_back(wi / beta);
  }
  sc.lambda.resize(k.m);
  sc.lambda.head(k.l) = sc.d.cwiseProduct(z.head(k.l));
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    sc.lambda.segment(k.start[c], k.q[c]) = sc.w[c] * z.segment(k.start[c], k.q[c]);
  }
  return sc;
}

VectorXd apply_w(const Layout& k, const Scaling& sc, const VectorXd& v, bool inverse) {
  VectorXd out(k.m);
  if (inverse) {
    out.head(k.l) = v.head(k.l).cwiseQuotient(sc.d);
  } else {
    out.head(k.l) = v.head(k.l).cwiseProduct(sc.d);
  }
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const auto& m = inverse ? sc.winv[c] : sc.w[c];
    out.segment(k.start[c], k.q[c]) = m * v.segment(k.start[c], k.q[c]);
  }
  return out;
}

class KktSolver {
 public:
  KktSolver(const SpMat& a, const SpMat& g, const Layout& k, double reg, int refine)
      : a_(a), g_(g), at_(a.transpose()), gt_(g.transpose()), k_(k), reg_(reg), refine_(refine) {
    n_ = static_cast<int>(a.cols());
    p_ = static_cast<int>(a.rows());
  }

  /// Factors the regularized matrix; the regularization grows on a failed pivot.
  bool factor(const Scaling& sc) {
    w2_.clear();
    for (const auto& w : sc.w) w2_.push_back(w * w);
    d2_ = sc.d.cwiseProduct(sc.d);
    for (double reg = reg_; reg <= 1e-3; reg *= 100.0) {
      const SpMat kkt = assemble(reg);
      if (!analyzed_) {
        ldlt_.analyzePattern(kkt);
        analyzed_ = true;
      }
      ldlt_.factorize(kkt);
      if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite()) return true;
    }
    return false;
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd sol = ldlt_.solve(rhs);
    const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
    for (int it = 0; it < refine_; ++it) {
      const VectorXd r = rhs - multiply(sol);
      if (r.cwiseAbs().maxCoeff() <= 1e-14 * scale) break;
      sol += ldlt_.solve(r);
    }
    return sol;
  }

 private:
  SpMat assemble(double reg) const {
    std::vector<Eigen::Triplet<double>> t;
    const int zoff = n_ + p_;
    for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg);
    for (int i = 0; i < p_; ++i) t.emplace_back(n_ + i, n_ + i, -reg);
    for (int j = 0; j < a_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(a_, j); it; ++it) t.emplace_back(n_ + it.row(), j, it.value());
    }
    for (int j = 0; j < g_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(g_, j); it; ++it) t.emplace_back(zoff + it.row(), j, it.value());
    }
    for (int i = 0; i < k_.l; ++i) t.emplace_back(zoff + i, zoff + i, -d2_(i) - reg);
    for (std::size_t c = 0; c < k_.q.size(); ++c) {
      const int s = k_.start[c];
      for (int i = 0; i < k_.q[c]; ++i) {
        for (int j = 0; j <= i; ++j) {
          t.emplace_back(zoff + s + i, zoff + s + j, -w2_[c](i, j) - (i == j ? reg : 0.0));
        }
      }
    }
    const int dim = n_ + p_ + k_.m;
    SpMat kkt(dim, dim);
    kkt.setFromTriplets(t.begin(), t.end());
    return kkt;
  }

  VectorXd multiply(const VectorXd& v) const {
    const auto vx = v.head(n_);
    const auto vy = v.segment(n_, p_);
    const auto vz = v.tail(k_.m);
    VectorXd out(v.size());
    out.head(n_) = at_ * vy + gt_ * vz;
    out.segment(n_, p_) = a_ * vx;
    VectorXd rz = g_ * vx;
    rz.head(k_.l) -= d2_.cwiseProduct(vz.head(k_.l));
    for (std::size_t c = 0; c < k_.q.size(); ++c) {
      rz.segment(k_.start[c], k_.q[c]) -= w2_[c] * vz.segment(k_.start[c], k_.q[c]);
    }
    out.tail(k_.m) = rz;
    return out;
  }

  const SpMat& a_;
  const SpMat& g_;
  SpMat at_, gt_;
  const Layout& k_;
  double reg_;
  int refine_;
  int n_ = 0, p_ = 0;
  bool analyzed_ = false;
  VectorXd d2_;
  std::vector<MatrixXd> w2_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

double safe_norm(const VectorXd& v) { return v.size() > 0 ? v.norm() : 0.0; }

}  // namespace

ConicSolution solve_conic(const ConeProblem& prob_in, const ConicOptions& opt) {
  const Layout k(prob_in.linear_rows, prob_in.soc_dims);
  const int n = static_cast<int>(prob_in.c.size());
  const int p = static_cast<int>(prob_in.a.rows());
  if (prob_in.a.cols() != n || prob_in.g.cols() != n || prob_in.g.rows() != k.m || prob_in.b.size() != p ||
      prob_in.h.size() != k.m) {
    throw Error("cone problem dimensions do not conform");
  }
  for (int d : k.q) {
    if (d < 1) throw Error("second-order cones need dimension >= 1");
  }

  // Row equilibration: each equality row, each orthant row and each cone
  // block divided by its largest entry.
  VectorXd ra = VectorXd::Ones(p), rg = VectorXd::Ones(k.m);
  {
    const SpMat at = prob_in.a.transpose();
    for (int i = 0; i < p; ++i) {
      double mx = 0.0;
      for (SpMat::InnerIterator it(at, i); it; ++it) mx = std::max(mx, std::abs(it.value()));
      if (mx > 0.0) ra(i) = 1.0 / mx;
    }
    const SpMat gt = prob_in.g.transpose();
    VectorXd rowmax = VectorXd::Zero(k.m);
    for (int i = 0; i < k.m; ++i) {
      for (SpMat::InnerIterator it(gt, i); it; ++it) rowmax(i) = std::max(rowmax(i), std::abs(it.value()));
    }
    for (int i = 0; i < k.l; ++i) {
      if (rowmax(i) > 0.0) rg(i) = 1.0 / rowmax(i);
    }
    for (std::size_t c = 0; c < k.q.size(); ++c) {
      const double mx = rowmax.segment(k.start[c], k.q[c]).maxCoeff();
      if (mx > 0.0) rg.segment(k.start[c], k.q[c]).setConstant(1.0 / mx);
    }
  }
  const SpMat a = ra.asDiagonal() * prob_in.a;
  const SpMat g = rg.asDiagonal() * prob_in.g;
  const VectorXd b = ra.cwiseProduct(prob_in.b);
  const VectorXd h = rg.cwiseProduct(prob_in.h);
  const VectorXd& c = prob_in.c;

  ConicSolution out;
  KktSolver kkt(a, g, k, opt.static_reg, opt.refine_steps);
  const VectorXd e = identity_element(k);

  Scaling sc;
  sc.d = VectorXd::Ones(k.l);
  for (int d : k.q) {
    sc.w.push_back(MatrixXd::Identity(d, d));
    sc.winv.push_back(MatrixXd::Identity(d, d));
  }
  if (!kkt.factor(sc)) {
    out.status = ConicStatus::kFailed;
    return out;
  }
  VectorXd rhs(n + p + k.m);
  rhs << VectorXd::Zero(n), b, h;
  VectorXd sol = kkt.solve(rhs);
  VectorXd x = sol.head(n);
  VectorXd s = shift_into_cone(k, -sol.tail(k.m));
  rhs << -c, VectorXd::Zero(p), VectorXd::Zero(k.m);
  sol = kkt.solve(rhs);
  VectorXd y = sol.segment(n, p);
  VectorXd z = shift_into_cone(k, sol.tail(k.m));
  double tau = 1.0, kappa = 1.0;

  const double nb = std::max(1.0, std::max(safe_norm(b), safe_norm(h)));
  const double nc = std::max(1.0, safe_norm(c));
  const SpMat at = a.transpose(), gt = g.transpose();

  double pres = kInf, dres = kInf, gap = kInf, relgap = kInf;
  auto finish = [&](ConicStatus st) {
    out.status = st;
    const double t = (st == ConicStatus::kOptimal || st == ConicStatus::kInaccurate) ? tau : 1.0;
    out.x = x / t;
    out.y = ra.cwiseProduct(y) / t;
    out.z = rg.cwiseProduct(z) / t;
    out.s = s.cwiseQuotient(rg) / t;
    out.primal_objective = c.dot(x) / t;
    out.dual_objective = -(b.dot(y) + h.dot(z)) / t;
    out.primal_residual = pres;
    out.dual_residual = dres;
    return out;
  };

  // Best iterate within the loose tolerances, returned if the method stalls.
  struct Saved {
    VectorXd x, y, z, s;
    double tau = 1.0, kappa = 1.0, pres = kInf, dres = kInf, gap = kInf, relgap = kInf;
    bool any = false;
  } saved;
  auto loose = [&]() {
    return pres < 1e3 * opt.feastol && dres < 1e3 * opt.feastol && (gap < 1e3 * opt.abstol || relgap < 1e3 * opt.reltol);
  };

  for (int iter = 0;; ++iter) {
    out.iterations = iter;
    const VectorXd r1 = at * y + gt * z + c * tau;
    const VectorXd r2 = -(a * x) + b * tau;
    const VectorXd r3 = s + g * x - h * tau;
    const double ctx = c.dot(x), bty = b.dot(y), htz = h.dot(z);
    const double r4 = kappa + ctx + bty + htz;

    const double pcost = ctx / tau, dcost = -(bty + htz) / tau;
    gap = s.dot(z) / (tau * tau);
    relgap = gap / std::max(1e-12, std::min(std::abs(pcost), std::abs(dcost)));
    if (pcost < 0.0 && dcost < 0.0) relgap = gap / std::max(std::abs(pcost), 1e-12);
    pres = std::max(safe_norm(r2), safe_norm(r3)) / tau / nb;
    dres = safe_norm(r1) / tau / nc;
    if (pres < opt.feastol && dres < opt.feastol && (gap < opt.abstol || relgap < opt.reltol)) {
      return finish(ConicStatus::kOptimal);
    }
    if (loose() && (!saved.any || std::max({pres, dres, relgap}) < std::max({saved.pres, saved.dres, saved.relgap}))) {
      saved = {x, y, z, s, tau, kappa, pres, dres, gap, relgap, true};
    }
    if (bty + htz < 0.0) {
      const double res = safe_norm(VectorXd(at * y + gt * z)) / nc;
      if (res / -(bty + htz) < opt.feastol) return finish(ConicStatus::kPrimalInfeasible);
    }
    if (ctx < 0.0) {
      const double res = std::max(safe_norm(VectorXd(a * x)) / nb, safe_norm(VectorXd(g * x + s)) / nb);
      if (res / -ctx < opt.feastol) return finish(ConicStatus::kDualInfeasible);
    }
    if (iter >= opt.max_iterations) break;

    sc = nt_scaling(k, s, z);
    if (!kkt.factor(sc)) {
      break;
    }
    const VectorXd& lam = sc.lambda;
    const double mu = (s.dot(z) + kappa * tau) / (k.degree() + 1);

    rhs << -c, b, h;
    const VectorXd sol1 = kkt.solve(rhs);
    const VectorXd x1 = sol1.head(n), y1 = sol1.segment(n, p), z1 = sol1.tail(k.m);
    const double denom = c.dot(x1) + b.dot(y1) + h.dot(z1) - kappa / tau;

    struct Dir {
      VectorXd dx, dy, dz, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    auto direction = [&](double sigma, const VectorXd& ds_target, double dk_target) {
      const double f = 1.0 - sigma;
      const VectorXd lds = inv_circ(k, lam, ds_target);
      const VectorXd wlds = apply_w(k, sc, lds, false);
      VectorXd r(n + p + k.m);
      r << -f * r1, f * r2, -f * r3 - wlds;
      const VectorXd sol2 = kkt.solve(r);
      Dir d;
      const double d4 = -f * r4;
      d.dtau = (d4 - dk_target / tau - c.dot(sol2.head(n)) - b.dot(sol2.segment(n, p)) - h.dot(sol2.tail(k.m))) / denom;
      d.dx = sol2.head(n) + d.dtau * x1;
      d.dy = sol2.segment(n, p) + d.dtau * y1;
      d.dz = sol2.tail(k.m) + d.dtau * z1;
      // W^-T ds + W dz = lambda \ ds_target
      d.ds = apply_w(k, sc, lds - apply_w(k, sc, d.dz, false), false);
      d.dkappa = (dk_target - kappa * d.dtau) / tau;
      return d;
    };
    auto step_length = [&](const Dir& d) {
      double alpha = std::min(max_step(k, s, d.ds), max_step(k, z, d.dz));
      if (d.dtau < 0.0) alpha = std::min(alpha, -tau / d.dtau);
      if (d.dkappa < 0.0) alpha = std::min(alpha, -kappa / d.dkappa);
      return alpha;
    };

    const VectorXd ll = circ(k, lam, lam);
    const Dir aff = direction(0.0, -ll, -kappa * tau);
    const double alpha_aff = std::min(1.0, step_length(aff));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);

    const VectorXd corr = circ(k, apply_w(k, sc, aff.ds, true), apply_w(k, sc, aff.dz, false));
    const Dir dir = direction(sigma, -ll - corr + sigma * mu * e, -kappa * tau - aff.dkappa * aff.dtau + sigma * mu);
    double alpha = step_length(dir);
    alpha = std::min(1.0, 0.99 * alpha);
    if (!(alpha > 1e-12)) break;

    x += alpha * dir.dx;
    y += alpha * dir.dy;
    z += alpha * dir.dz;
    s += alpha * dir.ds;
    tau += alpha * dir.dtau;
    kappa += alpha * dir.dkappa;
  }
  if (saved.any) {
    x = saved.x;
    y = saved.y;
    z = saved.z;
    s = saved.s;
    tau = saved.tau;
    kappa = saved.kappa;
    pres = saved.pres;
    dres = saved.dres;
    gap = saved.gap;
    relgap = saved.relgap;
    return finish(ConicStatus::kInaccurate);
  }
  return finish(ConicStatus::kFailed);
}

int ConicModel::add_var(double lo, double hi, double c, std::string name) {
  lower.push_back(lo);
  upper.push_back(hi);
  cost.push_back(c);
  names.push_back(std::move(name));
  return static_cast<int>(cost.size()) - 1;
}

ModelSolution solve_model(const ConicModel& model, const std::vector<double>& lower_in,
                          const std::vector<double>& upper_in, const ConicOptions& opt) {
  const int nv = model.num_vars();
  const auto& lo = lower_in.empty() ? model.lower : lower_in;
  const auto& hi = upper_in.empty() ? model.upper : upper_in;
  if (static_cast<int>(lo.size()) != nv || static_cast<int>(hi.size()) != nv) {
    throw Error("bound vectors do not match the model");
  }
  ModelSolution out;
  out.x.assign(nv, 0.0);
  constexpr double kTol = 1e-9;

  // Fixed variables are substituted; the rest are renumbered.
  std::vector<int> col(nv, -1);
  std::vector<int> free_vars;
  for (int j = 0; j < nv; ++j) {
    if (lo[j] > hi[j] + kTol) {
      out.status = ConicStatus::kPrimalInfeasible;
      out.reason = "empty bound interval";
      return out;
    }
    if (hi[j] - lo[j] <= 1e-12) {
      out.x[j] = lo[j];
    } else {
      col[j] = static_cast<int>(free_vars.size());
      free_vars.push_back(j);
    }
  }
  const int n = static_cast<int>(free_vars.size());

  std::vector<Eigen::Triplet<double>> at, gt;
  std::vector<double> bvec, hvec;
  auto reduce = [&](const LinExpr& e, std::vector<std::pair<int, double>>& terms) {
    double constant = e.constant;
    for (const auto& [v, coef] : e.terms) {
      if (col[v] < 0) {
        constant += coef * out.x[v];
      } else {
        terms.emplace_back(col[v], coef);
      }
    }
    return constant;
  };

  for (const auto& e : model.eq_rows) {
    std::vector<std::pair<int, double>> terms;
    const double constant = reduce(e, terms);
    bool empty = true;
    for (const auto& t : terms) empty = empty && t.second == 0.0;
    if (empty) {
      if (std::abs(constant) > 1e-7 * std::max(1.0, std::abs(e.constant))) {
        out.status = ConicStatus::kPrimalInfeasible;
        out.reason = "constant equality row violated";
        return out;
      }
      continue;
    }
    const int r = static_cast<int>(bvec.size());
    for (const auto& [j, coef] : terms) at.emplace_back(r, j, coef);
    bvec.push_back(-constant);
  }
  // G x + s = h with s >= 0 for expr <= 0: G = coefs, h = -constant.
  auto push_le = [&](const std::vector<std::pair<int, double>>& terms, double constant) {
    const int r = static_cast<int>(hvec.size());
    for (const auto& [j, coef] : terms) gt.emplace_back(r, j, coef);
    hvec.push_back(-constant);
  };
  for (const auto& e : model.le_rows) {
    std::vector<std::pair<int, double>> terms;
    const double constant = reduce(e, terms);
    bool empty = true;
    for (const auto& t : terms) empty = empty && t.second == 0.0;
    if (empty) {
      if (constant > 1e-7 * std::max(1.0, std::abs(e.constant))) {
        out.status = ConicStatus::kPrimalInfeasible;
        out.reason = "constant inequality row violated";
        return out;
      }
      continue;
    }
    push_le(terms, constant);
  }
  for (int j : free_vars) {
    if (std::isfinite(lo[j])) push_le({{col[j], -1.0}}, lo[j]);
    if (std::isfinite(hi[j])) push_le({{col[j], 1.0}}, -hi[j]);
  }
  const int linear = static_cast<int>(hvec.size());
  std::vector<int> dims;
  for (const auto& cone : model.cones) {
    std::vector<std::vector<std::pair<int, double>>> rows(cone.u.size() + 1);
    std::vector<double> consts(cone.u.size() + 1);
    consts[0] = reduce(cone.t, rows[0]);
    bool constant_cone = rows[0].empty();
    for (std::size_t i = 0; i < cone.u.size(); ++i) {
      consts[i + 1] = reduce(cone.u[i], rows[i + 1]);
      constant_cone = constant_cone && rows[i + 1].empty();
    }
    if (constant_cone) {
      double nrm = 0.0;
      for (std::size_t i = 1; i < consts.size(); ++i) nrm += consts[i] * consts[i];
      if (std::sqrt(nrm) > consts[0] + 1e-9) {
        out.status = ConicStatus::kPrimalInfeasible;
        out.reason = "constant cone violated";
        return out;
      }
      continue;
    }
    // s = h - G x = expr  =>  G = -coefs, h = constant.
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int r = static_cast<int>(hvec.size());
      for (const auto& [j, coef] : rows[i]) gt.emplace_back(r, j, -coef);
      hvec.push_back(consts[i]);
    }
    dims.push_back(static_cast<int>(rows.size()));
  }

  double fixed_cost = model.offset;
  for (int j = 0; j < nv; ++j) {
    if (col[j] < 0) fixed_cost += model.cost[j] * out.x[j];
  }
  if (n == 0) {
    out.status = ConicStatus::kOptimal;
    out.objective = fixed_cost;
    return out;
  }

  ConeProblem prob;
  prob.c.resize(n);
  for (int i = 0; i < n; ++i) prob.c(i) = model.cost[free_vars[i]];
  prob.a.resize(static_cast<int>(bvec.size()), n);
  prob.a.setFromTriplets(at.begin(), at.end());
  prob.b = Eigen::Map<const VectorXd>(bvec.data(), static_cast<Eigen::Index>(bvec.size()));
  prob.g.resize(static_cast<int>(hvec.size()), n);
  prob.g.setFromTriplets(gt.begin(), gt.end());
  prob.h = Eigen::Map<const VectorXd>(hvec.data(), static_cast<Eigen::Index>(hvec.size()));
  prob.linear_rows = linear;
  prob.soc_dims = dims;

  const auto sol = solve_conic(prob, opt);
  out.status = sol.status;
  out.iterations = sol.iterations;
  if (sol.status == ConicStatus::kOptimal || sol.status == ConicStatus::kInaccurate) {
    for (int i = 0; i < n; ++i) out.x[free_vars[i]] = sol.x(i);
    out.objective = fixed_cost + sol.primal_objective;
  } else {
    out.reason = "interior-point status: " + to_string(sol.status);
  }
  return out;
}

}  // namespace stabdro

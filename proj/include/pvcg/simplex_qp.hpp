#pragma once

/// Concave quadratic maximization over a scaled, optionally capped simplex:
///
///   maximize   c'w - q (w'Qw + b'w)
///   subject to sum(w) = M,  w >= 0,  w_i = 0 for i in zero_set,  w_i <= u_i
///
/// Every allocation and every VCG pricing subproblem goes through solve().
/// The solver is accelerated projected gradient (FISTA with gradient-based
/// restart) on the exact Euclidean projection, with a periodic active-set
/// polish that solves the KKT system on the identified face. Problems whose
/// quadratic part vanishes (q = 0 or Q = 0) are solved exactly as linear
/// programs over the simplex.
///
/// Ties between optimal points are broken towards the lowest indices, and
/// the solution carries a `degenerate` flag when that happened.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pvcg/errors.hpp"
#include "pvcg/market_model.hpp"

namespace pvcg {

struct SolverConfig {
  double kkt_tol = 1e-9;
  std::size_t max_iter = 100000;
  double psd_tol = 1e-8;
  std::size_t polish_every = 10;
};

struct QpProblem {
  Eigen::VectorXd linear;     // c
  Eigen::MatrixXd quadratic;  // Q, PSD
  double risk = 0.0;          // q
  double mass = 1.0;          // M
  std::vector<std::size_t> zero_set;
  std::optional<Eigen::VectorXd> caps;
  std::optional<Eigen::VectorXd> affine_linear;  // b

  Eigen::Index size() const noexcept { return linear.size(); }

  bool pinned(Eigen::Index i) const {
    return std::find(zero_set.begin(), zero_set.end(), static_cast<std::size_t>(i)) != zero_set.end();
  }

  double cap(Eigen::Index i) const {
    return caps ? (*caps)[i] : std::numeric_limits<double>::infinity();
  }

  /// c - q b
  Eigen::VectorXd effective_linear() const {
    if (affine_linear) return linear - risk * *affine_linear;
    return linear;
  }

  double objective(const Eigen::VectorXd& w) const {
    double penalty = w.dot(quadratic * w);
    if (affine_linear) penalty += affine_linear->dot(w);
    return linear.dot(w) - risk * penalty;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    return effective_linear() - risk * (quadratic + quadratic.transpose()) * w;
  }
};

struct QpSolution {
  Eigen::VectorXd weights;
  double objective_value = 0.0;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool degenerate = false;
};

/// Feasibility violations plus a scaled Frank-Wolfe gap. The gap
/// max_{s feasible} g'(s - w) bounds the suboptimality of a feasible w and
/// vanishes exactly at KKT points.
struct KktReport {
  double mass_violation = 0.0;   // |sum w - M| / max(1, M)
  double bound_violation = 0.0;  // max(-w_i) / max(1, M)
  double pin_violation = 0.0;    // max |w_i| over pinned i / max(1, M)
  double cap_violation = 0.0;    // max(w_i - u_i) / max(1, M)
  double stationarity = 0.0;     // gap / (1 + M max|g_i|)
  double gap = 0.0;              // unscaled
  bool within_tolerance = false;

  double residual() const {
    return std::max({mass_violation, bound_violation, pin_violation, cap_violation, stationarity});
  }
};

/// Euclidean projection onto {w >= 0, sum w = mass} (sort-based).
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& point, double mass) {
  if (!(mass > 0.0)) throw std::invalid_argument("project_to_simplex: mass must be positive");
  const Eigen::Index n = point.size();
  if (n == 0) throw std::invalid_argument("project_to_simplex: empty point");
  const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::max(mass, 1.0) * static_cast<double>(n);
  if (point.minCoeff() >= 0.0 && std::abs(point.sum() - mass) <= slack) return point;

  std::vector<double> sorted(point.data(), point.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    running += sorted[static_cast<std::size_t>(j)];
    const double t = (running - mass) / static_cast<double>(j + 1);
    if (sorted[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  return (point.array() - theta).max(0.0).matrix();
}

/// Euclidean projection onto {0 <= w <= caps, sum w = mass}. The threshold
/// tau with sum clamp(x - tau, 0, u) = mass is found exactly on the
/// piecewise-linear breakpoints.
inline Eigen::VectorXd project_to_capped_simplex(const Eigen::VectorXd& point, const Eigen::VectorXd& caps,
                                                 double mass) {
  if (!(mass > 0.0)) throw std::invalid_argument("project_to_capped_simplex: mass must be positive");
  if (caps.size() != point.size()) throw std::invalid_argument("project_to_capped_simplex: size mismatch");
  const Eigen::Index n = point.size();
  auto filled = [&](double tau) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::clamp(point[i] - tau, 0.0, caps[i]);
    return s;
  };
  auto apply = [&](double tau) {
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = std::clamp(point[i] - tau, 0.0, caps[i]);
    return w;
  };

  std::vector<double> breaks;
  breaks.reserve(static_cast<std::size_t>(2 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    breaks.push_back(point[i] - caps[i]);
    breaks.push_back(point[i]);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  double prev_tau = breaks.front();
  double prev_sum = filled(prev_tau);
  if (prev_sum <= mass) return caps;  // caps exactly exhaust the mass
  for (std::size_t k = 1; k < breaks.size(); ++k) {
    const double tau = breaks[k];
    const double s = filled(tau);
    if (s <= mass) {
      // s is linear on [prev_tau, tau]
      const double frac = (prev_sum - mass) / (prev_sum - s);
      return apply(prev_tau + frac * (tau - prev_tau));
    }
    prev_tau = tau;
    prev_sum = s;
  }
  // Above the largest breakpoint everything is zero; unreachable for mass > 0.
  return apply(prev_tau);
}

namespace detail {

/// argmax g's over {s >= 0, s <= u, sum s = mass, s_i = 0 off `active`}.
/// Greedy fill in decreasing g, lowest index first on ties.
inline Eigen::VectorXd linear_maximizer(const Eigen::VectorXd& g, const std::vector<bool>& active,
                                        const Eigen::VectorXd& caps, double mass) {
  const Eigen::Index n = g.size();
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i)
    if (active[static_cast<std::size_t>(i)]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return g[a] > g[b]; });
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  double left = mass;
  for (Eigen::Index i : order) {
    if (left <= 0.0) break;
    const double take = std::min(caps[i], left);
    s[i] = take;
    left -= take;
  }
  return s;
}

inline Eigen::VectorXd caps_or_inf(const QpProblem& p) {
  if (p.caps) return *p.caps;
  return Eigen::VectorXd::Constant(p.size(), std::numeric_limits<double>::infinity());
}

/// Problem restricted to its free (unpinned) coordinates, written as
/// maximize l'x - x'Hx/2 with H = q (Q + Q').
struct ReducedQp {
  Eigen::VectorXd l;
  Eigen::MatrixXd H;
  Eigen::VectorXd caps;
  double mass = 1.0;
  bool capped = false;

  Eigen::Index size() const { return l.size(); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return l - H * x; }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return capped ? project_to_capped_simplex(x, caps, mass) : project_to_simplex(x, mass);
  }

  double residual(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd g = gradient(x);
    const std::vector<bool> all(static_cast<std::size_t>(size()), true);
    const Eigen::VectorXd s = linear_maximizer(g, all, caps, mass);
    const double gap = std::max(0.0, g.dot(s - x));
    const double feas = std::abs(x.sum() - mass) / std::max(1.0, mass);
    return std::max(gap / (1.0 + mass * g.cwiseAbs().maxCoeff()), feas);
  }
};

inline bool is_interior(const ReducedQp& r, const Eigen::VectorXd& x, Eigen::Index i) {
  return x[i] > 0.0 && x[i] < r.caps[i];
}

/// KKT solve on the face identified by x: coordinates at 0 or at their cap
/// stay there, the rest satisfy H_SS x_S + lambda 1 = l_S - H_SU u_U with
/// sum x = M. Returns nullopt when the face solution leaves the box.
inline std::optional<Eigen::VectorXd> polish(const ReducedQp& r, const Eigen::VectorXd& x) {
  const Eigen::Index n = r.size();
  std::vector<Eigen::Index> free_idx;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  double fixed_mass = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_interior(r, x, i)) {
      free_idx.push_back(i);
    } else if (x[i] >= r.caps[i]) {
      y[i] = r.caps[i];
      fixed_mass += r.caps[i];
    }
  }
  if (free_idx.empty()) return x;
  const auto k = static_cast<Eigen::Index>(free_idx.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
  Eigen::VectorXd rhs(k + 1);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < k; ++b) kkt(a, b) = r.H(i, free_idx[static_cast<std::size_t>(b)]);
    kkt(a, k) = 1.0;
    kkt(k, a) = 1.0;
    double row = r.l[i];
    for (Eigen::Index j = 0; j < n; ++j)
      if (y[j] != 0.0) row -= r.H(i, j) * y[j];
    rhs[a] = row;
  }
  rhs[k] = r.mass - fixed_mass;
  const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  if (!sol.allFinite()) return std::nullopt;
  const double slack = 1e-12 * std::max(1.0, r.mass);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
    if (sol[a] < -slack || sol[a] > r.caps[i] + slack) return std::nullopt;
    y[i] = std::clamp(sol[a], 0.0, r.caps[i]);
  }
  return r.project(y);
}

/// Moves x along directions of constant objective until the optimal face
/// is a single point, preferring to empty high-index coordinates. This is
/// the limit of perturbing the linear term by -eps * index. Returns true if
/// x moved.
inline bool break_ties(const ReducedQp& r, Eigen::VectorXd& x) {
  bool moved = false;
  const double scale = std::max(1.0, r.H.cwiseAbs().maxCoeff());
  for (Eigen::Index pass = 0; pass < r.size(); ++pass) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < r.size(); ++i)
      if (is_interior(r, x, i)) s.push_back(i);
    const auto k = static_cast<Eigen::Index>(s.size());
    if (k < 2) break;
    Eigen::MatrixXd stacked(k + 1, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b)
        stacked(a, b) = r.H(s[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)]);
      stacked(k, a) = 1.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    std::vector<Eigen::Index> null_cols;
    for (Eigen::Index c = 0; c < k; ++c)
      if (sv[c] <= 1e-10 * scale) null_cols.push_back(c);
    if (null_cols.empty()) break;
    Eigen::MatrixXd basis(k, static_cast<Eigen::Index>(null_cols.size()));
    for (std::size_t c = 0; c < null_cols.size(); ++c)
      basis.col(static_cast<Eigen::Index>(c)) = svd.matrixV().col(null_cols[c]);

    Eigen::VectorXd index_weight(k);
    for (Eigen::Index a = 0; a < k; ++a) index_weight[a] = -static_cast<double>(s[static_cast<std::size_t>(a)]);
    Eigen::VectorXd d = basis * (basis.transpose() * index_weight);
    if (d.norm() < 1e-12) {
      d = basis.col(0);
      for (Eigen::Index a = k - 1; a >= 0; --a) {
        if (std::abs(d[a]) > 1e-12) {
          if (d[a] > 0.0) d = -d;
          break;
        }
      }
    }
    // the objective must be flat along d, not merely curvature-free
    const Eigen::VectorXd g = r.gradient(x);
    double slope = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) slope += g[s[static_cast<std::size_t>(a)]] * d[a];
    if (std::abs(slope) > 1e-9 * (1.0 + g.cwiseAbs().maxCoeff()) * d.cwiseAbs().sum()) break;

    double step = std::numeric_limits<double>::infinity();
    Eigen::Index blocking = -1;
    for (Eigen::Index a = 0; a < k; ++a) {
      const Eigen::Index i = s[static_cast<std::size_t>(a)];
      double t = std::numeric_limits<double>::infinity();
      if (d[a] < -1e-15) t = x[i] / -d[a];
      else if (d[a] > 1e-15) t = (r.caps[i] - x[i]) / d[a];
      if (t < step) {
        step = t;
        blocking = a;
      }
    }
    if (blocking < 0 || !std::isfinite(step)) break;
    for (Eigen::Index a = 0; a < k; ++a) x[s[static_cast<std::size_t>(a)]] += step * d[a];
    const Eigen::Index bi = s[static_cast<std::size_t>(blocking)];
    x[bi] = d[blocking] < 0.0 ? 0.0 : r.caps[bi];
    x = r.project(x.cwiseMax(0.0));
    moved = true;
  }
  return moved;
}

/// Ties exist in a linear problem when mass could move between two
/// coordinates with equal coefficients.
inline bool linear_ties(const Eigen::VectorXd& l, const Eigen::VectorXd& x, const Eigen::VectorXd& caps) {
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (!(x[i] > 0.0)) continue;
    for (Eigen::Index j = 0; j < l.size(); ++j)
      if (j != i && l[j] == l[i] && x[j] < caps[j]) return true;
  }
  return false;
}

}  // namespace detail

/// Throws ValidationError for malformed problems and InfeasibleError when
/// the feasible set is empty.
inline void validate_problem(const QpProblem& p, const SolverConfig& cfg = {}) {
  const Eigen::Index n = p.size();
  std::vector<Diagnostic> d;
  if (n == 0) d.push_back({"empty_problem", "problem has no coordinates"});
  if (p.quadratic.rows() != n || p.quadratic.cols() != n)
    d.push_back({"dimension_mismatch", "quadratic term is " + std::to_string(p.quadratic.rows()) + "x" +
                                           std::to_string(p.quadratic.cols()) + ", expected " +
                                           std::to_string(n) + "x" + std::to_string(n)});
  if (p.caps && p.caps->size() != n) d.push_back({"dimension_mismatch", "caps have the wrong length"});
  if (p.affine_linear && p.affine_linear->size() != n)
    d.push_back({"dimension_mismatch", "affine linear term has the wrong length"});
  if (!p.linear.allFinite() || (p.affine_linear && !p.affine_linear->allFinite()))
    d.push_back({"non_finite", "linear terms contain non-finite values"});
  if (!std::isfinite(p.risk) || p.risk < 0.0) d.push_back({"negative_risk", "risk weight must be finite and >= 0"});
  if (!std::isfinite(p.mass) || !(p.mass > 0.0)) d.push_back({"nonpositive_mass", "mass must be finite and > 0"});
  for (std::size_t i : p.zero_set)
    if (i >= static_cast<std::size_t>(n)) d.push_back({"pin_out_of_range", "pinned index " + std::to_string(i) + " out of range"});
  if (p.caps && p.caps->size() == n && !(p.caps->array() >= 0.0).all())
    d.push_back({"negative_cap", "caps must be >= 0"});
  if (d.empty()) {
    if (!p.quadratic.allFinite()) {
      d.push_back({"non_finite", "quadratic term contains non-finite values"});
    } else {
      const double sym_tol = 1e-10 * std::max(1.0, p.quadratic.cwiseAbs().maxCoeff());
      detail::check_covariance(p.quadratic, "quadratic", sym_tol, cfg.psd_tol, d);
    }
  }
  if (!d.empty()) throw ValidationError(std::move(d));

  double room = 0.0;
  Eigen::Index free_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.pinned(i)) continue;
    ++free_count;
    room += p.cap(i);
  }
  if (free_count == 0) throw InfeasibleError("every coordinate is pinned to zero");
  if (room < p.mass * (1.0 - 1e-12))
    throw InfeasibleError("caps on free coordinates sum to " + detail::fmt_num(room) + " < mass " +
                          detail::fmt_num(p.mass));
}

/// Feasibility and optimality residuals of `candidate` for `problem`.
inline KktReport check_kkt(const QpProblem& problem, const Eigen::VectorXd& candidate, double tol) {
  const Eigen::Index n = problem.size();
  if (candidate.size() != n)
    throw ValidationError("dimension_mismatch", "candidate has " + std::to_string(candidate.size()) +
                                                    " entries, problem has " + std::to_string(n));
  const double scale = std::max(1.0, problem.mass);
  KktReport rep;
  rep.mass_violation = std::abs(candidate.sum() - problem.mass) / scale;
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  for (Eigen::Index i = 0; i < n; ++i) {
    rep.bound_violation = std::max(rep.bound_violation, -candidate[i] / scale);
    if (problem.pinned(i)) {
      active[static_cast<std::size_t>(i)] = false;
      rep.pin_violation = std::max(rep.pin_violation, std::abs(candidate[i]) / scale);
    }
    rep.cap_violation = std::max(rep.cap_violation, (candidate[i] - problem.cap(i)) / scale);
  }
  const Eigen::VectorXd g = problem.gradient(candidate);
  const Eigen::VectorXd s = detail::linear_maximizer(g, active, detail::caps_or_inf(problem), problem.mass);
  rep.gap = std::max(0.0, g.dot(s - candidate));
  double gmax = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (active[static_cast<std::size_t>(i)]) gmax = std::max(gmax, std::abs(g[i]));
  rep.stationarity = rep.gap / (1.0 + problem.mass * gmax);
  rep.within_tolerance = rep.residual() <= tol;
  return rep;
}

/// Global maximizer of a concave QP over the (capped, pinned) simplex.
inline QpSolution solve(const QpProblem& problem, const SolverConfig& cfg = {}) {
  validate_problem(problem, cfg);
  const Eigen::Index n = problem.size();

  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!problem.pinned(i)) free_idx.push_back(i);
  const auto k = static_cast<Eigen::Index>(free_idx.size());

  detail::ReducedQp r;
  r.mass = problem.mass;
  r.capped = problem.caps.has_value();
  const Eigen::VectorXd l_full = problem.effective_linear();
  const Eigen::MatrixXd h_full = problem.risk * (problem.quadratic + problem.quadratic.transpose());
  r.l.resize(k);
  r.H.resize(k, k);
  r.caps.resize(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
    r.l[a] = l_full[i];
    r.caps[a] = problem.cap(i);
    for (Eigen::Index b = 0; b < k; ++b) r.H(a, b) = h_full(i, free_idx[static_cast<std::size_t>(b)]);
  }

  Eigen::VectorXd x;
  std::size_t iterations = 0;
  bool degenerate = false;
  const double h_scale = r.H.cwiseAbs().maxCoeff();
  double lipschitz = 0.0;
  if (h_scale > 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.H, Eigen::EigenvaluesOnly);
    lipschitz = es.eigenvalues().maxCoeff();
  }

  if (lipschitz <= 1e-14 * std::max(1.0, r.l.cwiseAbs().maxCoeff())) {
    const std::vector<bool> all(static_cast<std::size_t>(k), true);
    x = detail::linear_maximizer(r.l, all, r.caps, r.mass);
    degenerate = detail::linear_ties(r.l, x, r.caps);
  } else {
    const double step = 1.0 / lipschitz;
    Eigen::VectorXd start = Eigen::VectorXd::Constant(k, r.mass / static_cast<double>(k));
    x = r.project(start);
    bool converged = false;
    if (auto p = detail::polish(r, x); p && r.residual(*p) <= cfg.kkt_tol) {
      x = *p;
      converged = true;
    }
    Eigen::VectorXd y = x;
    double t = 1.0;
    while (!converged && iterations < cfg.max_iter) {
      ++iterations;
      const Eigen::VectorXd g = r.gradient(y);
      const Eigen::VectorXd next = r.project(y + step * g);
      if (g.dot(next - x) < 0.0) {
        t = 1.0;
        y = next;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - x);
        t = t_next;
      }
      x = next;
      if (iterations % cfg.polish_every == 0) {
        if (r.residual(x) <= cfg.kkt_tol) {
          converged = true;
        } else if (auto p = detail::polish(r, x); p && r.residual(*p) <= cfg.kkt_tol) {
          x = *p;
          converged = true;
        }
      }
    }
    if (!converged && r.residual(x) > cfg.kkt_tol) {
      throw SolverError("no convergence after " + std::to_string(iterations) + " iterations (residual " +
                        detail::fmt_num(r.residual(x)) + ")");
    }
    degenerate = detail::break_ties(r, x);
  }

  QpSolution sol;
  sol.weights = Eigen::VectorXd::Zero(n);
  for (Eigen::Index a = 0; a < k; ++a) sol.weights[free_idx[static_cast<std::size_t>(a)]] = x[a];
  sol.objective_value = problem.objective(sol.weights);
  sol.iterations = iterations;
  sol.degenerate = degenerate;
  const KktReport rep = check_kkt(problem, sol.weights, cfg.kkt_tol);
  sol.kkt_residual = rep.residual();
  if (!rep.within_tolerance) {
    throw SolverError("solution failed the KKT check (residual " + detail::fmt_num(sol.kkt_residual) + ")");
  }
  return sol;
}

}  // namespace pvcg

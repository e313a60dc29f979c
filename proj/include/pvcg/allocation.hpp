#pragma once

/// Efficient outcome selection: the allocation maximizing the sum of all
/// participants' valuations, for the portfolio form (weights on the unit
/// simplex) and the QMAP form (ad-call counts summing to m).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pvcg/errors.hpp"
#include "pvcg/market_model.hpp"
#include "pvcg/simplex_qp.hpp"

namespace pvcg {

struct Allocation {
  Eigen::VectorXd weights;                 // fractions (portfolio) or counts (QMAP)
  Eigen::VectorXd call_counts;             // continuous ad-call counts
  std::vector<std::int64_t> rounded_calls; // largest-remainder apportionment
  double objective_value = 0.0;
  bool degenerate = false;
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
};

/// Integer counts proportional to `shares` (clamped at 0) that sum exactly
/// to `total`; leftover units go to the largest fractional parts, lowest
/// index first on ties.
inline std::vector<std::int64_t> apportion(const Eigen::VectorXd& shares, std::int64_t total) {
  const Eigen::Index n = shares.size();
  std::vector<std::int64_t> out(static_cast<std::size_t>(n), 0);
  if (n == 0 || total <= 0) return out;
  const Eigen::VectorXd s = shares.cwiseMax(0.0);
  const double sum = s.sum();
  if (!(sum > 0.0)) {
    out[0] = total;
    return out;
  }
  std::vector<double> remainder(static_cast<std::size_t>(n));
  std::int64_t assigned = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double exact = s[i] / sum * static_cast<double>(total);
    const double whole = std::floor(exact);
    out[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(whole);
    remainder[static_cast<std::size_t>(i)] = exact - whole;
    assigned += static_cast<std::int64_t>(whole);
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size(), ++assigned) ++out[order[k]];
  for (std::size_t k = order.size(); assigned > total && k-- > 0;) {
    if (out[order[k]] > 0) {
      --out[order[k]];
      --assigned;
    }
  }
  return out;
}

/// max w'mu - q w'Sigma w over the unit simplex (with caps), with the
/// given offers forced to zero.
inline QpProblem portfolio_problem(const MarketInstance& market, std::vector<std::size_t> zero_set = {}) {
  QpProblem p;
  p.linear = market.mu();
  p.quadratic = market.sigma();
  p.risk = market.q();
  p.mass = 1.0;
  p.zero_set = std::move(zero_set);
  p.caps = market.caps();
  return p;
}

inline Allocation allocation_from(const QpSolution& sol, double scale_to_calls, std::int64_t total_calls) {
  Allocation a;
  a.weights = sol.weights;
  a.call_counts = sol.weights * scale_to_calls;
  a.rounded_calls = apportion(sol.weights, total_calls);
  a.objective_value = sol.objective_value;
  a.degenerate = sol.degenerate;
  a.iterations = sol.iterations;
  a.kkt_residual = sol.kkt_residual;
  return a;
}

/// Portfolio allocation w* for a validated market. With q = 0 all weight
/// goes to the offer with the largest mu (lowest index on ties).
inline Allocation allocate(const MarketInstance& market, const SolverConfig& cfg = {}) {
  const QpSolution sol = solve(portfolio_problem(market), cfg);
  return allocation_from(sol, static_cast<double>(market.pool_size()), market.pool_size());
}

// ---------------------------------------------------------------------------
// QMAP

enum class QmapForm { max_form, min_form };

/// QMAP data. In max form the objective is c'k - q (k'Ak + b'k); in min
/// form it is k'Ak + b'k - q c'k, to be minimized.
struct QmapInstance {
  Eigen::MatrixXd a_matrix;
  Eigen::VectorXd b_vector;
  Eigen::VectorXd c_vector;
  double q = 0.0;
  std::int64_t m = 1;
  QmapForm form = QmapForm::max_form;

  Eigen::Index size() const noexcept { return c_vector.size(); }

  friend bool operator==(const QmapInstance& x, const QmapInstance& y) {
    return x.q == y.q && x.m == y.m && x.form == y.form && x.c_vector.size() == y.c_vector.size() &&
           x.b_vector.size() == y.b_vector.size() && x.a_matrix.rows() == y.a_matrix.rows() &&
           x.a_matrix.cols() == y.a_matrix.cols() && x.c_vector == y.c_vector && x.b_vector == y.b_vector &&
           x.a_matrix == y.a_matrix;
  }
};

inline void validate_qmap(const QmapInstance& inst, const MarketTolerances& tol = {}) {
  std::vector<Diagnostic> d;
  const Eigen::Index n = inst.size();
  if (n < 1) d.push_back({"too_few_offers", "QMAP instance has no offers"});
  if (inst.b_vector.size() != n || inst.a_matrix.rows() != n || inst.a_matrix.cols() != n)
    d.push_back({"dimension_mismatch", "A must be n x n and b, c of length n (n = " + std::to_string(n) + ")"});
  if (!inst.c_vector.allFinite() || !inst.b_vector.allFinite() || !inst.a_matrix.allFinite())
    d.push_back({"non_finite", "A, b and c must be finite"});
  if (!std::isfinite(inst.q) || inst.q < 0.0) d.push_back({"negative_risk", "q must be finite and >= 0"});
  if (inst.m <= 0) d.push_back({"nonpositive_pool", "m = " + std::to_string(inst.m) + " <= 0"});
  if (d.empty()) detail::check_covariance(inst.a_matrix, "A", tol.sym_tol, tol.psd_tol, d);
  if (!d.empty()) throw ValidationError(std::move(d));
}

/// Min form k'Ak + b'k - q c'k becomes max form c'k - (1/q)(k'Ak + b'k):
/// substitute 1/q for q, multiply through by q, and flip the sign. Both
/// forms share their optimizer.
inline QmapInstance to_max_form(const QmapInstance& min_form) {
  if (min_form.form == QmapForm::max_form) return min_form;
  if (!(min_form.q > 0.0)) {
    throw ValidationError("transform_undefined",
                          "min-form QMAP with q = 0 has no max-form equivalent (1/q); supply the max form directly");
  }
  QmapInstance out = min_form;
  out.q = 1.0 / min_form.q;
  out.form = QmapForm::max_form;
  return out;
}

/// The max-form QMAP program as a QpProblem over {k >= 0, sum k = m}.
inline QpProblem qmap_problem(const QmapInstance& inst, std::vector<std::size_t> zero_set = {}) {
  const QmapInstance mx = to_max_form(inst);
  QpProblem p;
  p.linear = mx.c_vector;
  p.quadratic = mx.a_matrix;
  p.risk = mx.q;
  p.mass = static_cast<double>(mx.m);
  p.affine_linear = mx.b_vector;
  p.zero_set = std::move(zero_set);
  return p;
}

/// Transforms a min-form instance and encodes it for the solver.
inline QpProblem qmap_transform(const QmapInstance& min_form) {
  validate_qmap(min_form);
  if (min_form.form != QmapForm::min_form)
    throw ValidationError("wrong_form", "qmap_transform expects a min-form instance");
  return qmap_problem(min_form);
}

/// k* for a QMAP instance; min-form input is transformed first. Solved
/// literally in call units (the objective is not scale-invariant in m).
inline Allocation qmap_allocate(const QmapInstance& inst, const SolverConfig& cfg = {}) {
  validate_qmap(inst);
  const QpSolution sol = solve(qmap_problem(inst), cfg);
  Allocation a = allocation_from(sol, 1.0, inst.m);
  a.call_counts = sol.weights;
  return a;
}

}  // namespace pvcg

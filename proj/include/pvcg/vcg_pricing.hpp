#pragma once

/// VCG charges for portfolio allocations.
///
/// Offer i pays the externality it imposes on everyone else:
///
///   p_i = h_i - (F* - w*_i mu_i)
///
/// where F* = w*'mu - q w*'Sigma w* is the optimal total valuation and h_i
/// is the same optimum with w_i pinned to zero. The synthetic risk
/// participant is "charged" the revenue given up for risk aversion,
/// max over the feasible set of w'mu minus w*'mu. That charge is reported
/// but not billed, and publisher revenue is the sum of offer prices only.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pvcg/allocation.hpp"
#include "pvcg/errors.hpp"
#include "pvcg/market_model.hpp"
#include "pvcg/simplex_qp.hpp"

namespace pvcg {

inline constexpr double kPriceEpsilon = 1e-6;

struct PriceSchedule {
  Eigen::VectorXd offer_prices;
  std::optional<double> risk_charge;  // absent for QMAP
  double publisher_revenue = 0.0;
  std::vector<std::optional<double>> per_ad_call;
  std::vector<std::optional<double>> per_response;
  Eigen::VectorXd restricted_objectives;  // h_i
  double full_objective = 0.0;            // F*
};

namespace detail {

inline void require_index(std::size_t i, std::size_t n) {
  if (i >= n) throw std::out_of_range("offer index " + std::to_string(i) + " out of range (n = " + std::to_string(n) + ")");
}

inline void require_competition(std::size_t n) {
  if (n < 2) throw ValidationError("too_few_offers", "VCG prices need at least 2 offers");
}

}  // namespace detail

/// h_i: optimum of the market with offer i removed.
inline double restricted_objective(const MarketInstance& market, std::size_t i, const SolverConfig& cfg = {}) {
  detail::require_competition(market.size());
  detail::require_index(i, market.size());
  return solve(portfolio_problem(market, {i}), cfg).objective_value;
}

inline double price_offer(const MarketInstance& market, const Allocation& alloc, std::size_t i,
                          const SolverConfig& cfg = {}) {
  const double h = restricted_objective(market, i, cfg);
  const auto ii = static_cast<Eigen::Index>(i);
  return h - (alloc.objective_value - alloc.weights[ii] * market.mu()[ii]);
}

/// Revenue a risk-neutral publisher would collect minus w*'mu; >= 0 since a
/// linear objective peaks at a vertex of the feasible set.
inline double price_risk_participant(const MarketInstance& market, const Allocation& alloc,
                                     const SolverConfig& cfg = {}) {
  QpProblem neutral = portfolio_problem(market);
  neutral.risk = 0.0;
  const double best = solve(neutral, cfg).objective_value;
  return best - alloc.weights.dot(market.mu());
}

/// Full schedule for a market whose allocation is already known.
inline PriceSchedule price_schedule(const MarketInstance& market, const Allocation& alloc,
                                    const SolverConfig& cfg = {}) {
  detail::require_competition(market.size());
  const std::size_t n = market.size();
  const auto ni = static_cast<Eigen::Index>(n);
  PriceSchedule s;
  s.full_objective = alloc.objective_value;
  s.offer_prices.resize(ni);
  s.restricted_objectives.resize(ni);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double h = restricted_objective(market, i, cfg);
    s.restricted_objectives[ii] = h;
    s.offer_prices[ii] = h - (alloc.objective_value - alloc.weights[ii] * market.mu()[ii]);
  }
  s.risk_charge = price_risk_participant(market, alloc, cfg);
  s.publisher_revenue = s.offer_prices.sum();

  s.per_ad_call.assign(n, std::nullopt);
  s.per_response.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (alloc.rounded_calls[i] < 1) continue;
    const double per_call = s.offer_prices[ii] / alloc.call_counts[ii];
    s.per_ad_call[i] = per_call;
    const Offer& o = market.offer(i);
    if (o.basis == PaymentBasis::per_response && o.response_rate && *o.response_rate > 0.0)
      s.per_response[i] = per_call / *o.response_rate;
  }
  return s;
}

inline PriceSchedule price_schedule(const MarketInstance& market, const SolverConfig& cfg = {}) {
  return price_schedule(market, allocate(market, cfg), cfg);
}

/// Offer prices for a QMAP instance:
///   p_i = max_{k_i = 0} [c'k - q(k'Ak + b'k)] - [c'k* - q(k*'Ak* + b'k*) - c_i k*_i]
/// The b'k term belongs to the risk participant. No risk charge is defined.
inline PriceSchedule qmap_prices(const QmapInstance& inst, const Allocation& alloc, const SolverConfig& cfg = {}) {
  validate_qmap(inst);
  const auto n = static_cast<std::size_t>(inst.size());
  detail::require_competition(n);
  const QmapInstance mx = to_max_form(inst);
  PriceSchedule s;
  s.full_objective = alloc.objective_value;
  s.offer_prices.resize(inst.size());
  s.restricted_objectives.resize(inst.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double h = solve(qmap_problem(mx, {i}), cfg).objective_value;
    s.restricted_objectives[ii] = h;
    s.offer_prices[ii] = h - (alloc.objective_value - mx.c_vector[ii] * alloc.weights[ii]);
  }
  s.publisher_revenue = s.offer_prices.sum();
  s.per_ad_call.assign(n, std::nullopt);
  s.per_response.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (alloc.rounded_calls[i] >= 1) s.per_ad_call[i] = s.offer_prices[ii] / alloc.call_counts[ii];
  }
  return s;
}

inline PriceSchedule qmap_prices(const QmapInstance& inst, const SolverConfig& cfg = {}) {
  return qmap_prices(inst, qmap_allocate(inst, cfg), cfg);
}

}  // namespace pvcg

#pragma once

/// Empirical checks of the mechanism's properties on seeded random markets:
/// truthfulness, individual rationality, the q = 0 second-price limit, and
/// agreement between the solver and a brute-force lattice search.
///
/// Every suite also checks, on each instance it prices, that the full
/// optimum is at least every pinned optimum (the restriction inequality).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pvcg/allocation.hpp"
#include "pvcg/market_model.hpp"
#include "pvcg/simplex_qp.hpp"
#include "pvcg/vcg_pricing.hpp"

namespace pvcg {

enum class Property { truthfulness, individual_rationality, second_price, oracle };

inline const char* to_string(Property p) {
  switch (p) {
    case Property::truthfulness: return "truthfulness";
    case Property::individual_rationality: return "ir";
    case Property::second_price: return "second_price";
    case Property::oracle: return "oracle";
  }
  return "?";
}

struct PropertyReport {
  std::string property;
  std::size_t trials = 0;
  std::size_t violations = 0;
  std::size_t skipped = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // smallest slack seen
  std::uint64_t seed = 0;
  std::vector<std::string> counterexamples;
  std::size_t restriction_checks = 0;
  std::size_t restriction_violations = 0;

  bool passed() const noexcept { return violations == 0 && restriction_violations == 0; }

  void record(double margin, double eps, const std::string& what) {
    worst_margin = std::min(worst_margin, margin);
    if (margin < -eps) {
      ++violations;
      if (counterexamples.size() < 10) counterexamples.push_back(what);
    }
  }
};

struct VerifyConfig {
  SolverConfig solver;
  double eps_price = kPriceEpsilon;
};

/// Realized utility of offer i: true value of its allocation minus its price.
inline double utility(const MarketInstance& market, const Allocation& alloc, const PriceSchedule& schedule,
                      std::size_t i) {
  detail::require_index(i, market.size());
  const auto ii = static_cast<Eigen::Index>(i);
  return alloc.weights[ii] * market.mu()[ii] - schedule.offer_prices[ii];
}

namespace detail {

inline std::string describe(const MarketInstance& m) {
  std::ostringstream os;
  os.precision(17);
  os << "n=" << m.size() << " q=" << m.q() << " mu=[";
  for (Eigen::Index i = 0; i < m.mu().size(); ++i) os << (i ? "," : "") << m.mu()[i];
  os << "]";
  return os.str();
}

inline void check_restriction(const PriceSchedule& s, double eps, PropertyReport& rep) {
  for (Eigen::Index i = 0; i < s.restricted_objectives.size(); ++i) {
    ++rep.restriction_checks;
    if (s.full_objective < s.restricted_objectives[i] - eps) ++rep.restriction_violations;
  }
}

}  // namespace detail

/// Offer i misreports mu_i + delta for each delta; its true utility under
/// the deviated outcome must not beat truthful bidding.
inline PropertyReport check_truthfulness(const MarketInstance& market, std::size_t i, const std::vector<double>& deltas,
                                         const VerifyConfig& cfg = {}) {
  detail::require_index(i, market.size());
  PropertyReport rep;
  rep.property = "truthfulness";
  const Allocation truth_alloc = allocate(market, cfg.solver);
  const PriceSchedule truth = price_schedule(market, truth_alloc, cfg.solver);
  detail::check_restriction(truth, cfg.eps_price, rep);
  const double u_truth = utility(market, truth_alloc, truth, i);
  const auto ii = static_cast<Eigen::Index>(i);
  for (double delta : deltas) {
    const double reported = market.mu()[ii] + delta;
    if (!(reported >= 0.0)) {
      ++rep.skipped;
      continue;
    }
    ++rep.trials;
    const MarketInstance lie = with_reported_value(market, i, reported);
    const Allocation lie_alloc = allocate(lie, cfg.solver);
    const PriceSchedule lie_prices = price_schedule(lie, lie_alloc, cfg.solver);
    detail::check_restriction(lie_prices, cfg.eps_price, rep);
    // true value, reported-market price
    const double u_dev = utility(market, lie_alloc, lie_prices, i);
    rep.record(u_truth - u_dev, cfg.eps_price,
               detail::describe(market) + " bidder=" + std::to_string(i) + " delta=" + detail::fmt_num(delta) +
                   " u_truth=" + detail::fmt_num(u_truth) + " u_dev=" + detail::fmt_num(u_dev));
  }
  return rep;
}

inline PropertyReport check_individual_rationality(const MarketInstance& market, const VerifyConfig& cfg = {}) {
  PropertyReport rep;
  rep.property = "ir";
  rep.trials = 1;
  const Allocation alloc = allocate(market, cfg.solver);
  const PriceSchedule s = price_schedule(market, alloc, cfg.solver);
  detail::check_restriction(s, cfg.eps_price, rep);
  for (std::size_t i = 0; i < market.size(); ++i) {
    rep.record(utility(market, alloc, s, i), cfg.eps_price,
               detail::describe(market) + " offer=" + std::to_string(i) + " utility<0");
  }
  rep.record(*s.risk_charge, cfg.eps_price, detail::describe(market) + " risk_charge<0");
  return rep;
}

/// q = 0 with a unique top mu: winner takes everything and pays the second
/// highest mu; everyone else (and the risk participant) pays 0. Markets
/// with q != 0 or a tied maximum are counted as skipped.
inline PropertyReport check_second_price_limit(const MarketInstance& market, const VerifyConfig& cfg = {}) {
  PropertyReport rep;
  rep.property = "second_price";
  const Eigen::VectorXd& mu = market.mu();
  std::vector<double> sorted(mu.data(), mu.data() + mu.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (market.q() != 0.0 || sorted[0] == sorted[1] || market.caps()) {
    rep.skipped = 1;
    return rep;
  }
  rep.trials = 1;
  Eigen::Index winner = 0;
  mu.maxCoeff(&winner);
  const Allocation alloc = allocate(market, cfg.solver);
  const PriceSchedule s = price_schedule(market, alloc, cfg.solver);
  detail::check_restriction(s, cfg.eps_price, rep);
  const std::string who = detail::describe(market);
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double want_w = i == winner ? 1.0 : 0.0;
    const double want_p = i == winner ? sorted[1] : 0.0;
    rep.record(-std::abs(alloc.weights[i] - want_w), cfg.eps_price,
               who + " weight[" + std::to_string(i) + "]=" + detail::fmt_num(alloc.weights[i]));
    rep.record(-std::abs(s.offer_prices[i] - want_p), cfg.eps_price,
               who + " price[" + std::to_string(i) + "]=" + detail::fmt_num(s.offer_prices[i]) +
                   " expected " + detail::fmt_num(want_p));
  }
  rep.record(-std::abs(*s.risk_charge), cfg.eps_price, who + " risk_charge=" + detail::fmt_num(*s.risk_charge));
  return rep;
}

/// Best point of the lattice {mass * k * step : k integer >= 0, sum k * step = 1}
/// under `objective`. Ties go to the point carrying the most weight on the
/// lowest indices.
template <class Objective>
Eigen::VectorXd grid_maximize(Eigen::Index n, double mass, double step, Objective&& objective,
                              double* best_value = nullptr) {
  if (n < 1 || n > 4) throw std::invalid_argument("grid search supports 1 <= n <= 4");
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("grid step must be in (0, 1]");
  const auto units = static_cast<std::int64_t>(std::llround(1.0 / step));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd best = w;
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<std::int64_t> k(static_cast<std::size_t>(n), 0);
  auto visit = [&](auto&& self, Eigen::Index pos, std::int64_t left) -> void {
    if (pos == n - 1) {
      k[static_cast<std::size_t>(pos)] = left;
      for (Eigen::Index i = 0; i < n; ++i)
        w[i] = mass * static_cast<double>(k[static_cast<std::size_t>(i)]) / static_cast<double>(units);
      const double v = objective(w);
      if (v > best_val) {
        best_val = v;
        best = w;
      }
      return;
    }
    for (std::int64_t take = left; take >= 0; --take) {
      k[static_cast<std::size_t>(pos)] = take;
      self(self, pos + 1, left - take);
    }
  };
  visit(visit, 0, units);
  if (best_value) *best_value = best_val;
  return best;
}

/// Exhaustive lattice search for the portfolio objective (n <= 4). Caps
/// are honoured by rejecting lattice points that exceed them.
inline Allocation brute_force_allocate(const MarketInstance& market, double step) {
  const auto n = static_cast<Eigen::Index>(market.size());
  const auto caps = market.caps();
  const Eigen::VectorXd& mu = market.mu();
  const Eigen::MatrixXd& sigma = market.sigma();
  const double q = market.q();
  double best = 0.0;
  const Eigen::VectorXd w = grid_maximize(n, 1.0, step, [&](const Eigen::VectorXd& x) {
    double value = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (caps && x[i] > (*caps)[i] + 1e-12) return -std::numeric_limits<double>::infinity();
      double row = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) row += sigma(i, j) * x[j];
      value += x[i] * (mu[i] - q * row);
    }
    return value;
  }, &best);
  Allocation a;
  a.weights = w;
  a.call_counts = w * static_cast<double>(market.pool_size());
  a.rounded_calls = apportion(w, market.pool_size());
  a.objective_value = best;
  return a;
}

// ---------------------------------------------------------------------------
// Random markets

struct GeneratorConfig {
  std::size_t min_offers = 2;
  std::size_t max_offers = 6;
  double mu_max = 5.0;
  double ridge = 1e-6;  // Sigma = G'G + ridge I
  double q_min = 1e-3;
  double q_max = 10.0;
  std::int64_t pool_size = 1000;
  bool zero_risk = false;
};

/// mu ~ U[0, mu_max], G_ij ~ N(0, 1), q log-uniform on [q_min, q_max]
/// (or 0 when zero_risk). Offers alternate per-ad-call and per-response.
inline MarketInstance random_market(std::mt19937_64& rng, const GeneratorConfig& g = {}) {
  std::uniform_int_distribution<std::size_t> size_dist(g.min_offers, g.max_offers);
  std::uniform_real_distribution<double> mu_dist(0.0, g.mu_max);
  std::uniform_real_distribution<double> rate_dist(0.01, 1.0);
  std::uniform_real_distribution<double> log_q(std::log(g.q_min), std::log(g.q_max));
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n = size_dist(rng);
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd gm(ni, ni);
  for (Eigen::Index r = 0; r < ni; ++r)
    for (Eigen::Index c = 0; c < ni; ++c) gm(r, c) = normal(rng);
  Eigen::MatrixXd sigma = gm.transpose() * gm;
  sigma = 0.5 * (sigma + sigma.transpose());
  sigma.diagonal().array() += g.ridge;

  MarketInput in;
  in.sigma = std::move(sigma);
  in.q = g.zero_risk ? 0.0 : std::exp(log_q(rng));
  in.pool_size = g.pool_size;
  for (std::size_t i = 0; i < n; ++i) {
    const double value = mu_dist(rng);
    Offer o;
    o.id = "o" + std::to_string(i + 1);
    if (i % 2 == 1) {
      o.basis = PaymentBasis::per_response;
      o.response_rate = rate_dist(rng);
      o.bid = value / *o.response_rate;
    } else {
      o.bid = value;
    }
    in.offers.push_back(std::move(o));
  }
  return validate_market(std::move(in)).value();
}

// ---------------------------------------------------------------------------
// Seeded suites

namespace detail {

inline void merge(PropertyReport& into, const PropertyReport& part) {
  into.trials += part.trials;
  into.violations += part.violations;
  into.skipped += part.skipped;
  into.worst_margin = std::min(into.worst_margin, part.worst_margin);
  into.restriction_checks += part.restriction_checks;
  into.restriction_violations += part.restriction_violations;
  for (const auto& c : part.counterexamples)
    if (into.counterexamples.size() < 10) into.counterexamples.push_back(c);
}

}  // namespace detail

/// One (market, bidder, delta) sample per trial, delta ~ U[-mu_i, +5].
inline PropertyReport run_truthfulness_suite(std::uint64_t seed, std::size_t trials, const VerifyConfig& cfg = {}) {
  PropertyReport rep;
  rep.property = "truthfulness";
  rep.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const MarketInstance m = random_market(rng);
    std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
    const std::size_t i = pick(rng);
    std::uniform_real_distribution<double> dd(-m.mu()[static_cast<Eigen::Index>(i)], 5.0);
    detail::merge(rep, check_truthfulness(m, i, {dd(rng)}, cfg));
  }
  return rep;
}

inline PropertyReport run_ir_suite(std::uint64_t seed, std::size_t trials, const VerifyConfig& cfg = {}) {
  PropertyReport rep;
  rep.property = "ir";
  rep.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) detail::merge(rep, check_individual_rationality(random_market(rng), cfg));
  return rep;
}

/// Draws q = 0 markets until `trials` tie-free ones have been checked.
inline PropertyReport run_second_price_suite(std::uint64_t seed, std::size_t trials, const VerifyConfig& cfg = {}) {
  PropertyReport rep;
  rep.property = "second_price";
  rep.seed = seed;
  std::mt19937_64 rng(seed);
  GeneratorConfig g;
  g.zero_risk = true;
  while (rep.trials < trials) detail::merge(rep, check_second_price_limit(random_market(rng, g), cfg));
  return rep;
}

/// n in {2, 3}: solver objective within 1e-4 of the lattice maximum at
/// step 1e-3. The margin recorded is 1e-4 - |difference|.
inline PropertyReport run_oracle_suite(std::uint64_t seed, std::size_t trials, const VerifyConfig& cfg = {},
                                       double step = 1e-3, double tolerance = 1e-4) {
  PropertyReport rep;
  rep.property = "oracle";
  rep.seed = seed;
  std::mt19937_64 rng(seed);
  GeneratorConfig g;
  g.max_offers = 3;
  for (std::size_t t = 0; t < trials; ++t) {
    const MarketInstance m = random_market(rng, g);
    const Allocation fast = allocate(m, cfg.solver);
    const Allocation grid = brute_force_allocate(m, step);
    detail::check_restriction(price_schedule(m, fast, cfg.solver), cfg.eps_price, rep);
    ++rep.trials;
    const double diff = fast.objective_value - grid.objective_value;
    rep.record(tolerance - std::abs(diff), 0.0,
               detail::describe(m) + " solver=" + detail::fmt_num(fast.objective_value) +
                   " grid=" + detail::fmt_num(grid.objective_value));
  }
  return rep;
}

inline PropertyReport run_suite(Property p, std::uint64_t seed, std::size_t trials, const VerifyConfig& cfg = {}) {
  switch (p) {
    case Property::truthfulness: return run_truthfulness_suite(seed, trials, cfg);
    case Property::individual_rationality: return run_ir_suite(seed, trials, cfg);
    case Property::second_price: return run_second_price_suite(seed, trials, cfg);
    case Property::oracle: return run_oracle_suite(seed, trials, cfg);
  }
  throw std::invalid_argument("unknown property");
}

}  // namespace pvcg

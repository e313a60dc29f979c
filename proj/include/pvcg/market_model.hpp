#pragma once

/// Auction input: offers, return covariance, risk parameter and pool size.
///
/// A MarketInstance can only be obtained through validate_market(), so any
/// instance in hand satisfies every invariant below:
///   - at least two offers, unique non-empty ids;
///   - bids finite and >= 0, response rates in [0, 1];
///   - sigma is n x n, finite, symmetric within sym_tol and PSD within
///     psd_tol (relative to the largest diagonal entry);
///   - q finite and >= 0, pool_size > 0;
///   - optional per-offer caps in [0, 1] that admit a full allocation.
///
/// mu[i] is the expected revenue of offer i if it received the whole pool.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pvcg/errors.hpp"

namespace pvcg {

enum class PaymentBasis { per_ad_call, per_response };

inline const char* to_string(PaymentBasis basis) {
  return basis == PaymentBasis::per_ad_call ? "per_ad_call" : "per_response";
}

struct Offer {
  std::string id;
  double bid = 0.0;
  PaymentBasis basis = PaymentBasis::per_ad_call;
  std::optional<double> response_rate;  // required iff basis == per_response
  std::optional<double> cap;            // max fraction of the pool

  /// Rate used for conversions: 1 for per-ad-call offers.
  double effective_rate() const {
    return basis == PaymentBasis::per_ad_call ? 1.0 : response_rate.value_or(0.0);
  }

  friend bool operator==(const Offer&, const Offer&) = default;
};

/// Expected value of an offer: bid for per-ad-call offers, bid times
/// response rate for per-response offers.
inline double expected_value(const Offer& offer) {
  if (offer.basis == PaymentBasis::per_ad_call) return offer.bid;
  if (!offer.response_rate) {
    throw ValidationError("missing_response_rate",
                          "offer '" + offer.id + "' pays per response but has no response_rate");
  }
  return offer.bid * *offer.response_rate;
}

struct MarketTolerances {
  double sym_tol = 1e-10;  // absolute
  double psd_tol = 1e-8;   // relative to max diagonal entry
};

/// Unvalidated market as read from a file or built by hand.
struct MarketInput {
  std::vector<Offer> offers;
  Eigen::MatrixXd sigma;
  double q = 0.0;
  std::int64_t pool_size = 1;

  friend bool operator==(const MarketInput& a, const MarketInput& b) {
    return a.offers == b.offers && a.q == b.q && a.pool_size == b.pool_size &&
           a.sigma.rows() == b.sigma.rows() && a.sigma.cols() == b.sigma.cols() &&
           a.sigma == b.sigma;
  }
};

class MarketInstance;
struct MarketValidation;
MarketValidation validate_market(MarketInput raw, const MarketTolerances& tol);

/// Validated, immutable market.
class MarketInstance {
 public:
  const MarketInput& input() const noexcept { return input_; }
  const std::vector<Offer>& offers() const noexcept { return input_.offers; }
  const Offer& offer(std::size_t i) const { return input_.offers.at(i); }
  const Eigen::MatrixXd& sigma() const noexcept { return input_.sigma; }
  double q() const noexcept { return input_.q; }
  std::int64_t pool_size() const noexcept { return input_.pool_size; }
  const Eigen::VectorXd& mu() const noexcept { return mu_; }
  std::size_t size() const noexcept { return input_.offers.size(); }

  /// Per-offer fraction caps, or nullopt when no offer is capped.
  std::optional<Eigen::VectorXd> caps() const {
    bool any = false;
    Eigen::VectorXd u = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
      if (input_.offers[i].cap) {
        any = true;
        u[static_cast<Eigen::Index>(i)] = *input_.offers[i].cap;
      }
    }
    if (!any) return std::nullopt;
    return u;
  }

 private:
  friend MarketValidation validate_market(MarketInput raw, const MarketTolerances& tol);
  MarketInstance(MarketInput input, Eigen::VectorXd mu) : input_(std::move(input)), mu_(std::move(mu)) {}

  MarketInput input_;
  Eigen::VectorXd mu_;
};

struct MarketValidation {
  std::optional<MarketInstance> instance;
  std::vector<Diagnostic> diagnostics;

  bool ok() const noexcept { return instance.has_value(); }

  /// The validated instance, or a ValidationError carrying every diagnostic.
  const MarketInstance& value() const& {
    if (!instance) throw ValidationError(diagnostics);
    return *instance;
  }
  MarketInstance value() && {
    if (!instance) throw ValidationError(diagnostics);
    return std::move(*instance);
  }
};

namespace detail {

inline std::string fmt_num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_diagonal(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.diagonal().maxCoeff();
}

/// Appends asymmetry / PSD diagnostics for a square finite matrix.
inline void check_covariance(const Eigen::MatrixXd& m, const std::string& name, double sym_tol,
                             double psd_tol, std::vector<Diagnostic>& out) {
  std::vector<std::string> bad;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      if (std::abs(m(i, j) - m(j, i)) > sym_tol) {
        bad.push_back(name + "[" + std::to_string(i) + "][" + std::to_string(j) + "]=" +
                      fmt_num(m(i, j)) + " vs " + name + "[" + std::to_string(j) + "][" +
                      std::to_string(i) + "]=" + fmt_num(m(j, i)));
      }
    }
  }
  if (!bad.empty()) {
    std::string msg = name + " is not symmetric:";
    for (std::size_t k = 0; k < bad.size() && k < 8; ++k) msg += " " + bad[k] + ";";
    if (bad.size() > 8) msg += " (" + std::to_string(bad.size() - 8) + " more)";
    out.push_back({"asymmetric", msg});
    return;
  }
  const double lo = min_eigenvalue(m);
  const double bound = -psd_tol * std::max(max_diagonal(m), 0.0);
  if (lo < bound) {
    out.push_back({"not_psd", name + " is not positive semidefinite: smallest eigenvalue " +
                                  fmt_num(lo) + " < " + fmt_num(bound)});
  }
}

}  // namespace detail

/// Checks every invariant and derives mu. Never throws; violations are
/// collected into the returned diagnostics.
inline MarketValidation validate_market(MarketInput raw, const MarketTolerances& tol = {}) {
  std::vector<Diagnostic> diags;
  const std::size_t n = raw.offers.size();

  if (n < 2) {
    diags.push_back({"too_few_offers", "market has " + std::to_string(n) +
                                           " offer(s); pricing needs at least 2"});
  }

  std::set<std::string> seen;
  double cap_total = 0.0;
  bool any_uncapped = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Offer& o = raw.offers[i];
    const std::string who = "offer " + std::to_string(i) + " ('" + o.id + "')";
    if (o.id.empty()) diags.push_back({"empty_id", who + " has an empty id"});
    if (!seen.insert(o.id).second) diags.push_back({"duplicate_id", who + " repeats an id"});
    if (!std::isfinite(o.bid)) {
      diags.push_back({"non_finite_bid", who + " bid is not finite"});
    } else if (o.bid < 0.0) {
      diags.push_back({"negative_bid", who + " bid " + detail::fmt_num(o.bid) + " < 0"});
    }
    if (o.basis == PaymentBasis::per_response) {
      if (!o.response_rate) {
        diags.push_back({"missing_response_rate", who + " pays per response but has no response_rate"});
      } else if (!(*o.response_rate >= 0.0 && *o.response_rate <= 1.0)) {
        diags.push_back({"response_rate_out_of_range",
                         who + " response_rate " + detail::fmt_num(*o.response_rate) +
                             " outside [0, 1]"});
      }
    } else if (o.response_rate && *o.response_rate != 1.0) {
      diags.push_back({"response_rate_not_applicable",
                       who + " pays per ad call; response_rate must be absent or 1"});
    }
    if (o.cap) {
      if (!(*o.cap >= 0.0 && *o.cap <= 1.0)) {
        diags.push_back({"cap_out_of_range",
                         who + " cap " + detail::fmt_num(*o.cap) + " outside [0, 1]"});
      }
      cap_total += *o.cap;
    } else {
      any_uncapped = true;
    }
  }
  if (n > 0 && !any_uncapped && cap_total < 1.0 - 1e-12) {
    diags.push_back({"caps_infeasible", "offer caps sum to " + detail::fmt_num(cap_total) +
                                            " < 1; the pool cannot be fully allocated"});
  }

  if (!std::isfinite(raw.q)) {
    diags.push_back({"non_finite_risk", "risk parameter q is not finite"});
  } else if (raw.q < 0.0) {
    diags.push_back({"negative_risk", "risk parameter q = " + detail::fmt_num(raw.q) + " < 0"});
  }
  if (raw.pool_size <= 0) {
    diags.push_back({"nonpositive_pool", "pool_size " + std::to_string(raw.pool_size) + " <= 0"});
  }

  const auto rows = static_cast<std::size_t>(raw.sigma.rows());
  const auto cols = static_cast<std::size_t>(raw.sigma.cols());
  if (rows != n || cols != n) {
    diags.push_back({"dimension_mismatch", "covariance is " + std::to_string(rows) + "x" +
                                               std::to_string(cols) + " but there are " +
                                               std::to_string(n) + " offers"});
  }
  if (!raw.sigma.allFinite()) {
    diags.push_back({"non_finite_covariance", "covariance has non-finite entries"});
  } else if (rows == cols) {
    detail::check_covariance(raw.sigma, "sigma", tol.sym_tol, tol.psd_tol, diags);
  }

  MarketValidation result;
  if (!diags.empty()) {
    result.diagnostics = std::move(diags);
    return result;
  }
  Eigen::VectorXd mu(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) mu[static_cast<Eigen::Index>(i)] = expected_value(raw.offers[i]);
  result.instance = MarketInstance(std::move(raw), std::move(mu));
  return result;
}

/// Builds per-ad-call offers o1..on whose bids are the given expected values.
inline MarketInput market_from_values(const Eigen::VectorXd& mu, Eigen::MatrixXd sigma, double q,
                                      std::int64_t pool_size = 1) {
  MarketInput in;
  in.offers.reserve(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    in.offers.push_back(Offer{"o" + std::to_string(i + 1), mu[i], PaymentBasis::per_ad_call, {}, {}});
  }
  in.sigma = std::move(sigma);
  in.q = q;
  in.pool_size = pool_size;
  return in;
}

/// Same market with offer i reporting expected value `value` instead of its own.
/// Per-response offers with a positive rate keep their basis; the bid is rescaled.
inline MarketInstance with_reported_value(const MarketInstance& market, std::size_t i, double value,
                                          const MarketTolerances& tol = {}) {
  MarketInput in = market.input();
  Offer& o = in.offers.at(i);
  if (o.basis == PaymentBasis::per_response && o.response_rate && *o.response_rate > 0.0) {
    o.bid = value / *o.response_rate;
  } else {
    o.basis = PaymentBasis::per_ad_call;
    o.response_rate.reset();
    o.bid = value;
  }
  return validate_market(std::move(in), tol).value();
}

}  // namespace pvcg

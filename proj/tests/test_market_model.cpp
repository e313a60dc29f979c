#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "pvcg/market_model.hpp"

namespace {

using pvcg::MarketInput;
using pvcg::Offer;
using pvcg::PaymentBasis;

bool has_code(const pvcg::MarketValidation& v, const std::string& code) {
  return std::any_of(v.diagnostics.begin(), v.diagnostics.end(),
                     [&](const pvcg::Diagnostic& d) { return d.code == code; });
}

MarketInput two_offer_input(Eigen::Matrix2d sigma) {
  return pvcg::market_from_values(Eigen::Vector2d(1.0, 0.8), sigma, 0.5, 1000);
}

TEST(ExpectedValue, PerResponseMultipliesRate) {
  EXPECT_DOUBLE_EQ(pvcg::expected_value(Offer{"a", 2.0, PaymentBasis::per_response, 0.5, {}}), 1.0);
}

TEST(ExpectedValue, PerAdCallIsBid) {
  EXPECT_DOUBLE_EQ(pvcg::expected_value(Offer{"a", 3.0, PaymentBasis::per_ad_call, {}, {}}), 3.0);
}

TEST(ExpectedValue, ZeroRateGivesZero) {
  EXPECT_EQ(pvcg::expected_value(Offer{"a", 2.0, PaymentBasis::per_response, 0.0, {}}), 0.0);
}

TEST(ExpectedValue, MissingRateIsValidationError) {
  EXPECT_THROW(pvcg::expected_value(Offer{"a", 2.0, PaymentBasis::per_response, {}, {}}), pvcg::ValidationError);
}

TEST(ExpectedValue, MonotoneInBidAndRate) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const double bid = 10 * u(rng), rate = u(rng), db = u(rng), dr = u(rng) * (1.0 - rate);
    const Offer base{"x", bid, PaymentBasis::per_response, rate, {}};
    EXPECT_LE(pvcg::expected_value(base), pvcg::expected_value(Offer{"x", bid + db, PaymentBasis::per_response, rate, {}}));
    EXPECT_LE(pvcg::expected_value(base), pvcg::expected_value(Offer{"x", bid, PaymentBasis::per_response, rate + dr, {}}));
  }
}

TEST(ValidateMarket, AcceptsIdentityCovariance) {
  const auto v = pvcg::validate_market(two_offer_input(Eigen::Matrix2d::Identity()));
  ASSERT_TRUE(v.ok());
  EXPECT_EQ(v.value().size(), 2u);
  EXPECT_DOUBLE_EQ(v.value().mu()[0], 1.0);
  EXPECT_DOUBLE_EQ(v.value().mu()[1], 0.8);
}

TEST(ValidateMarket, RejectsAsymmetricAndNamesEntries) {
  Eigen::Matrix2d s;
  s << 1, 0.5, 0.4, 1;
  const auto v = pvcg::validate_market(two_offer_input(s));
  ASSERT_FALSE(v.ok());
  ASSERT_TRUE(has_code(v, "asymmetric"));
  EXPECT_NE(v.diagnostics.front().message.find("sigma[0][1]=0.5"), std::string::npos);
  EXPECT_THROW((void)v.value(), pvcg::ValidationError);
}

TEST(ValidateMarket, RejectsIndefinite) {
  // eigenvalues 3 and -1
  Eigen::Matrix2d s;
  s << 1, 2, 2, 1;
  const auto v = pvcg::validate_market(two_offer_input(s));
  ASSERT_FALSE(v.ok());
  EXPECT_TRUE(has_code(v, "not_psd"));
  EXPECT_NE(v.diagnostics.front().message.find("-1"), std::string::npos);
}

TEST(ValidateMarket, PsdToleranceIsRelativeToDiagonal) {
  // smallest eigenvalue -1e-7 on a diagonal of 100: within 1e-8 * 100
  Eigen::Matrix2d s;
  s << 100, 0, 0, -1e-7;
  EXPECT_TRUE(pvcg::validate_market(two_offer_input(s)).ok());
  s(1, 1) = -1e-5;
  EXPECT_FALSE(pvcg::validate_market(two_offer_input(s)).ok());
}

TEST(ValidateMarket, ReportsEveryViolation) {
  MarketInput in;
  in.offers = {Offer{"a", -1.0, PaymentBasis::per_response, {}, {}}};
  in.sigma = Eigen::MatrixXd::Identity(2, 2);
  in.q = -0.5;
  in.pool_size = 0;
  const auto v = pvcg::validate_market(in);
  ASSERT_FALSE(v.ok());
  for (const char* code : {"too_few_offers", "negative_bid", "missing_response_rate", "negative_risk",
                           "nonpositive_pool", "dimension_mismatch"}) {
    EXPECT_TRUE(has_code(v, code)) << code;
  }
}

TEST(ValidateMarket, RejectsDuplicateIdsAndBadRates) {
  MarketInput in = two_offer_input(Eigen::Matrix2d::Identity());
  in.offers[1].id = in.offers[0].id;
  in.offers[0].basis = PaymentBasis::per_response;
  in.offers[0].response_rate = 1.5;
  const auto v = pvcg::validate_market(in);
  EXPECT_TRUE(has_code(v, "duplicate_id"));
  EXPECT_TRUE(has_code(v, "response_rate_out_of_range"));
}

TEST(ValidateMarket, RejectsCapsThatCannotFillThePool) {
  MarketInput in = two_offer_input(Eigen::Matrix2d::Identity());
  in.offers[0].cap = 0.4;
  in.offers[1].cap = 0.5;
  EXPECT_TRUE(has_code(pvcg::validate_market(in), "caps_infeasible"));
  in.offers[1].cap = 0.6;
  EXPECT_TRUE(pvcg::validate_market(in).ok());
}

TEST(ValidateMarket, AcceptedInstancesSatisfyInvariants) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + t % 5;
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = g(rng);
    Eigen::VectorXd mu(n);
    for (int i = 0; i < n; ++i) mu[i] = u(rng);
    const auto v = pvcg::validate_market(pvcg::market_from_values(mu, m.transpose() * m, u(rng), 10));
    ASSERT_TRUE(v.ok());
    const auto& inst = v.value();
    EXPECT_GE(inst.mu().minCoeff(), 0.0);
    EXPECT_GE(pvcg::detail::min_eigenvalue(inst.sigma()), -1e-8 * inst.sigma().diagonal().maxCoeff());
    EXPECT_TRUE(inst.sigma().isApprox(inst.sigma().transpose(), 1e-12));
  }
}

TEST(WithReportedValue, KeepsPerResponseBasis) {
  MarketInput in = two_offer_input(Eigen::Matrix2d::Identity());
  in.offers[0] = Offer{"a", 10.0, PaymentBasis::per_response, 0.1, {}};
  const auto market = pvcg::validate_market(in).value();
  const auto lie = pvcg::with_reported_value(market, 0, 1.2);
  EXPECT_EQ(lie.offer(0).basis, PaymentBasis::per_response);
  EXPECT_NEAR(lie.mu()[0], 1.2, 1e-15);
  EXPECT_EQ(lie.mu()[1], market.mu()[1]);
}

}  // namespace

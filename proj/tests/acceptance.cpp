// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Seeds, trial counts, tolerances and time limits are fixed here.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pvcg/pvcg.hpp"

namespace {

namespace oracle = pvcg::testing;

constexpr double kFixtureTol = 1e-6;
constexpr double kPriceTol = 1e-6;
constexpr double kOracleTol = 1e-4;
constexpr double kOracleStep = 1e-3;
constexpr double kQmapTol = 1e-6;

constexpr std::uint64_t kSecondPriceSeed = 20240501;
constexpr std::uint64_t kTruthSeed = 20240502;
constexpr std::uint64_t kIrSeed = 20240503;
constexpr std::uint64_t kOracleSeed = 20240504;
constexpr std::uint64_t kQmapSeed = 20240505;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Restriction {
  std::size_t checks = 0;
  std::size_t violations = 0;
  void add(const pvcg::PropertyReport& r) {
    checks += r.restriction_checks;
    violations += r.restriction_violations;
  }
} restriction;

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string summary(const pvcg::PropertyReport& r) {
  std::string s = "trials=" + std::to_string(r.trials) + " violations=" + std::to_string(r.violations) +
                  " worst_margin=" + fmt("%.3g", r.worst_margin);
  if (!r.counterexamples.empty()) s += " first: " + r.counterexamples.front();
  return s;
}

pvcg::MarketInstance market(Eigen::VectorXd mu, Eigen::MatrixXd sigma, double q, std::int64_t pool = 1000) {
  return pvcg::validate_market(pvcg::market_from_values(mu, std::move(sigma), q, pool)).value();
}

Outcome fixture() {
  const auto m = market(Eigen::Vector2d(1.0, 0.8), Eigen::Matrix2d::Identity(), 0.5);
  const auto a = pvcg::allocate(m);
  const auto s = pvcg::price_schedule(m, a);

  // independent closed form and grid values
  const auto f = [&](const Eigen::Vector2d& w) { return oracle::portfolio_value(w, m.mu(), m.sigma(), m.q()); };
  const Eigen::Vector2d w = oracle::two_offer_optimum(m.mu(), m.sigma(), m.q());
  const double grid = oracle::grid_max_two(f, 1.0, 1e-4);
  const double h1 = f({0.0, 1.0}), h2 = f({1.0, 0.0});
  const double linear_max = m.mu().maxCoeff();

  double worst = 0.0;
  auto near = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  near(w[0], 0.6);
  near(grid, 0.66);
  near(h1 - (grid - 0.6 * 1.0), 0.24);
  near(h2 - (grid - 0.4 * 0.8), 0.16);
  near(linear_max - w.dot(m.mu()), 0.08);

  near(a.weights[0], 0.6);
  near(a.weights[1], 0.4);
  near(a.objective_value, 0.66);
  near(s.offer_prices[0], 0.24);
  near(s.offer_prices[1], 0.16);
  near(*s.risk_charge, 0.08);
  near(s.publisher_revenue, 0.40);
  near(pvcg::utility(m, a, s, 0), 0.36);
  near(pvcg::utility(m, a, s, 1), 0.16);
  return {worst <= kFixtureTol, "max_abs_error=" + fmt("%.3g", worst)};
}

Outcome second_price() {
  const auto r = pvcg::run_second_price_suite(kSecondPriceSeed, 500);
  restriction.add(r);
  return {r.trials >= 500 && r.violations == 0, summary(r) + " skipped_ties=" + std::to_string(r.skipped)};
}

Outcome truthfulness() {
  const auto r = pvcg::run_truthfulness_suite(kTruthSeed, 1000);
  restriction.add(r);
  return {r.trials >= 1000 && r.violations == 0, summary(r)};
}

Outcome individual_rationality() {
  const auto r = pvcg::run_ir_suite(kIrSeed, 1000);
  restriction.add(r);
  return {r.trials >= 1000 && r.violations == 0, summary(r)};
}

Outcome solver_oracle() {
  pvcg::VerifyConfig cfg;
  const auto r = pvcg::run_oracle_suite(kOracleSeed, 100, cfg, kOracleStep, kOracleTol);
  restriction.add(r);
  return {r.trials == 100 && r.violations == 0,
          summary(r) + " max_gap=" + fmt("%.3g", kOracleTol - r.worst_margin)};
}

Outcome qmap_consistency() {
  std::mt19937_64 rng(kQmapSeed);
  double worst = 0.0;
  std::size_t grid_mismatches = 0;
  pvcg::PropertyReport side;
  for (int t = 0; t < 100; ++t) {
    const auto m = pvcg::random_market(rng);
    const auto n = static_cast<Eigen::Index>(m.size());
    const pvcg::QmapInstance inst{m.sigma(), Eigen::VectorXd::Zero(n), m.mu(), m.q(), 1};
    const auto a = pvcg::allocate(m);
    const auto k = pvcg::qmap_allocate(inst);
    const auto s = pvcg::qmap_prices(inst, k);
    pvcg::detail::check_restriction(s, kPriceTol, side);
    worst = std::max(worst, (a.weights - k.weights).cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(pvcg::price_offer(m, a, static_cast<std::size_t>(i)) - s.offer_prices[i]));

    // min form with the same data; on a shared lattice both objectives pick
    // the same point
    const Eigen::Index gn = std::min<Eigen::Index>(n, 3);
    const Eigen::MatrixXd ga = m.sigma().topLeftCorner(gn, gn);
    const Eigen::VectorXd gb = 0.1 * m.mu().head(gn).reverse(), gc = m.mu().head(gn);
    const pvcg::QmapInstance min_form{ga, gb, gc, m.q(), 1, pvcg::QmapForm::min_form};
    const pvcg::QpProblem max_form = pvcg::qmap_transform(min_form);
    const double step = gn == 3 ? 1e-2 : 1e-3;
    const Eigen::VectorXd by_min = pvcg::grid_maximize(gn, 1.0, step, [&](const Eigen::VectorXd& x) {
      return -(x.dot(ga * x) + gb.dot(x) - m.q() * gc.dot(x));
    });
    const Eigen::VectorXd by_max =
        pvcg::grid_maximize(gn, 1.0, step, [&](const Eigen::VectorXd& x) { return max_form.objective(x); });
    if (by_min != by_max) ++grid_mismatches;
  }
  restriction.add(side);
  return {worst <= kQmapTol && grid_mismatches == 0,
          "instances=100 max_abs_diff=" + fmt("%.3g", worst) + " grid_mismatches=" + std::to_string(grid_mismatches)};
}

Outcome risk_reward() {
  // volatile offer with a low-value hedge: correlation -0.9
  Eigen::Matrix2d sigma;
  sigma << 1.0, -0.9, -0.9, 1.0;
  const auto m = market(Eigen::Vector2d(1.0, 0.1), sigma, 1.0);
  const auto a = pvcg::allocate(m);
  const auto s = pvcg::price_schedule(m, a);

  Eigen::Vector2d gw;
  const auto f = [&](const Eigen::Vector2d& w) { return oracle::portfolio_value(w, m.mu(), sigma, 1.0); };
  const double grid = oracle::grid_max_two(f, 1.0, 1e-4, &gw);
  const double grid_price = f({1.0, 0.0}) - (grid - gw[1] * 0.1);

  const bool negative = s.offer_prices[1] < 0.0 && grid_price < 0.0;
  const bool agrees = std::abs(s.offer_prices[1] - grid_price) <= 1e-4;
  const auto ir = pvcg::check_individual_rationality(m);
  return {negative && agrees && ir.passed(),
          "hedge_price=" + fmt("%.6f", s.offer_prices[1]) + " grid_price=" + fmt("%.6f", grid_price) +
              " min_utility=" + fmt("%.6f", ir.worst_margin)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"fixture exactness", 1.0, fixture},
      {"second-price limit", 10.0, second_price},
      {"truthfulness", 60.0, truthfulness},
      {"individual rationality", 60.0, individual_rationality},
      {"solver-oracle agreement", 120.0, solver_oracle},
      {"qmap consistency", 30.0, qmap_consistency},
      {"risk-reducing offer paid", 0.0, risk_reward},
  };

  bool all = true;
  int index = 0;
  auto report = [&](const char* name, bool pass, const std::string& detail, double secs, double limit) {
    const std::string budget = limit > 0.0 ? fmt("(limit %gs)", limit) : "(no limit)";
    std::printf("%s [%d] %-26s %7.3fs %-12s %s\n", pass ? "PASS" : "FAIL", ++index, name, secs, budget.c_str(),
                detail.c_str());
    std::fflush(stdout);
    all = all && pass;
  };

  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0.0 && secs > c.limit_s) {
      o.pass = false;
      o.detail += " (over time limit)";
    }
    report(c.name, o.pass, o.detail, secs, c.limit_s);
  }

  report("restriction inequality", restriction.violations == 0 && restriction.checks > 0,
         "checks=" + std::to_string(restriction.checks) + " violations=" + std::to_string(restriction.violations), 0.0,
         0.0);
  std::printf("%s\n", all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}

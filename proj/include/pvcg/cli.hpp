#pragma once

/// Command-line front end: allocate, price, qmap, verify.
///
/// Exit codes: 0 success, 2 parse, 3 validation, 4 solver, 5 property
/// violation.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pvcg/allocation.hpp"
#include "pvcg/errors.hpp"
#include "pvcg/io.hpp"
#include "pvcg/market_model.hpp"
#include "pvcg/vcg_pricing.hpp"
#include "pvcg/verification.hpp"

namespace pvcg::cli {

enum ExitCode : int { ok = 0, parse_failure = 2, validation_failure = 3, solver_failure = 4, property_violation = 5 };

struct Options {
  std::string input;
  std::string output;
  std::string format = "json";
  double kkt_tol = SolverConfig{}.kkt_tol;
  double eps_price = kPriceEpsilon;
  std::size_t max_iter = SolverConfig{}.max_iter;
  std::uint64_t seed = 42;
  std::size_t trials = 1000;
  std::string property = "all";

  SolverConfig solver() const {
    SolverConfig c;
    c.kkt_tol = kkt_tol;
    c.max_iter = max_iter;
    return c;
  }
};

namespace detail {

using io::json;

inline void print_vector(std::ostream& os, const char* label, const Eigen::VectorXd& v) {
  os << std::left << std::setw(22) << label;
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << std::setw(14) << v[i];
  os << '\n';
}

inline void print_optionals(std::ostream& os, const char* label, const std::vector<std::optional<double>>& v) {
  os << std::left << std::setw(22) << label;
  for (const auto& x : v) {
    os << ' ' << std::setw(14);
    if (x) os << *x;
    else os << '-';
  }
  os << '\n';
}

/// Human-readable rendering of a result document.
inline std::string render_text(const json& doc) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "command: " << doc.value("command", "") << '\n';
  if (doc.contains("input_digest")) os << "input: " << doc["input_digest"].get<std::string>() << '\n';
  auto vec = [](const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
  };
  auto opt = [](const json& a) {
    std::vector<std::optional<double>> v;
    for (const auto& x : a) v.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
    return v;
  };
  if (doc.contains("allocation")) {
    const json& a = doc["allocation"];
    print_vector(os, "weights", vec(a["weights"]));
    print_vector(os, "call_counts", vec(a["call_counts"]));
    os << "objective: " << a["objective"].get<double>() << '\n';
  }
  if (doc.contains("prices")) {
    const json& p = doc["prices"];
    print_vector(os, "offer_prices", vec(p["offer_prices"]));
    print_optionals(os, "per_ad_call", opt(p["per_ad_call"]));
    print_optionals(os, "per_response", opt(p["per_response"]));
    if (!p["risk_charge"].is_null()) os << "risk_charge: " << p["risk_charge"].get<double>() << '\n';
    os << "publisher_revenue: " << p["publisher_revenue"].get<double>() << '\n';
  }
  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    os << "solver: iterations=" << s["iterations"] << " kkt_residual=" << s["kkt_residual"].get<double>()
       << " degenerate=" << (s["degenerate"].get<bool>() ? "yes" : "no") << '\n';
  }
  if (doc.contains("reports")) {
    for (const json& r : doc["reports"]) {
      os << (r["passed"].get<bool>() ? "PASS " : "FAIL ") << std::left << std::setw(14)
         << r["property"].get<std::string>() << " trials=" << r["trials"] << " violations=" << r["violations"]
         << " skipped=" << r["skipped"] << " worst_margin=" << r["worst_margin"] << '\n';
    }
  }
  return os.str();
}

inline void emit(const json& doc, const Options& opt, std::ostream& out) {
  const std::string body = opt.format == "text" ? render_text(doc) : doc.dump(2) + "\n";
  if (opt.output.empty()) {
    out << body;
    return;
  }
  std::ofstream f(opt.output, std::ios::binary);
  if (!f) throw ParseError("cannot write " + opt.output);
  f << body;
}

inline json market_header(const char* command, const std::string& raw, const MarketInstance& m) {
  json doc;
  doc["command"] = command;
  doc["input_digest"] = io::digest(raw);
  json ids = json::array();
  for (const Offer& o : m.offers()) ids.push_back(o.id);
  doc["offers"] = std::move(ids);
  return doc;
}

inline MarketInstance load_market(const std::string& raw) {
  return validate_market(io::parse_market(raw)).value();
}

inline int cmd_allocate(const Options& opt, std::ostream& out) {
  const std::string raw = io::read_file(opt.input);
  const MarketInstance m = load_market(raw);
  const Allocation a = allocate(m, opt.solver());
  json doc = market_header("allocate", raw, m);
  doc["allocation"] = io::to_json(a);
  doc["solver"] = io::solver_json(a);
  emit(doc, opt, out);
  return ok;
}

inline int cmd_price(const Options& opt, std::ostream& out) {
  const std::string raw = io::read_file(opt.input);
  const MarketInstance m = load_market(raw);
  const Allocation a = allocate(m, opt.solver());
  const PriceSchedule s = price_schedule(m, a, opt.solver());
  json doc = market_header("price", raw, m);
  doc["allocation"] = io::to_json(a);
  doc["prices"] = io::to_json(s);
  doc["solver"] = io::solver_json(a);
  emit(doc, opt, out);
  return ok;
}

inline int cmd_qmap(const Options& opt, std::ostream& out) {
  const std::string raw = io::read_file(opt.input);
  const QmapInstance inst = io::parse_qmap(raw);
  const Allocation a = qmap_allocate(inst, opt.solver());
  json doc;
  doc["command"] = "qmap";
  doc["input_digest"] = io::digest(raw);
  doc["form"] = inst.form == QmapForm::max_form ? "max" : "min";
  doc["effective_q"] = to_max_form(inst).q;
  doc["allocation"] = io::to_json(a);
  if (inst.size() >= 2) doc["prices"] = io::to_json(qmap_prices(inst, a, opt.solver()));
  doc["solver"] = io::solver_json(a);
  emit(doc, opt, out);
  return ok;
}

inline int cmd_verify(const Options& opt, std::ostream& out) {
  std::vector<Property> props;
  if (opt.property == "all") {
    props = {Property::truthfulness, Property::individual_rationality, Property::second_price, Property::oracle};
  } else if (opt.property == "truthfulness") {
    props = {Property::truthfulness};
  } else if (opt.property == "ir") {
    props = {Property::individual_rationality};
  } else if (opt.property == "second_price") {
    props = {Property::second_price};
  } else {
    props = {Property::oracle};
  }
  VerifyConfig cfg;
  cfg.solver = opt.solver();
  cfg.eps_price = opt.eps_price;
  json doc;
  doc["command"] = "verify";
  doc["seed"] = opt.seed;
  doc["trials"] = opt.trials;
  json reports = json::array();
  bool passed = true;
  for (Property p : props) {
    const PropertyReport r = run_suite(p, opt.seed, opt.trials, cfg);
    passed = passed && r.passed();
    reports.push_back(io::to_json(r));
  }
  doc["reports"] = std::move(reports);
  doc["passed"] = passed;
  emit(doc, opt, out);
  return passed ? ok : property_violation;
}

}  // namespace detail

/// Runs one CLI invocation; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Risk-averse portfolio allocation of ad calls with VCG pricing"};
  app.require_subcommand(1);
  Options opt;

  auto add_solver_flags = [&](CLI::App* sub) {
    sub->add_option("--output,-o", opt.output, "Write the result here instead of stdout");
    sub->add_option("--format", opt.format, "Output format")->check(CLI::IsMember({"json", "text"}));
    sub->add_option("--kkt-tol", opt.kkt_tol, "Solver KKT residual tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", opt.max_iter, "Solver iteration limit")->check(CLI::PositiveNumber);
    sub->add_option("--eps-price", opt.eps_price, "Price tolerance for property checks")->check(CLI::PositiveNumber);
  };
  auto add_file_command = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--input,-i", opt.input, "Input file")->required();
    add_solver_flags(sub);
    return sub;
  };
  CLI::App* allocate_cmd = add_file_command("allocate", "Compute the portfolio allocation of a market file");
  CLI::App* price_cmd = add_file_command("price", "Allocate and compute VCG prices for a market file");
  CLI::App* qmap_cmd = add_file_command("qmap", "Allocate and price a QMAP instance file");
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run randomized property checks");
  verify_cmd->add_option("--seed", opt.seed, "Random seed");
  verify_cmd->add_option("--trials", opt.trials, "Trials per property");
  verify_cmd->add_option("--property", opt.property, "Property suite")
      ->check(CLI::IsMember({"truthfulness", "ir", "second_price", "oracle", "all"}));
  add_solver_flags(verify_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return parse_failure;
  }

  try {
    if (allocate_cmd->parsed()) return detail::cmd_allocate(opt, out);
    if (price_cmd->parsed()) return detail::cmd_price(opt, out);
    if (qmap_cmd->parsed()) return detail::cmd_qmap(opt, out);
    return detail::cmd_verify(opt, out);
  } catch (const ValidationError& e) {
    err << "validation error:\n";
    for (const Diagnostic& d : e.diagnostics()) err << "  " << d.code << ": " << d.message << '\n';
    return validation_failure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::parse: return parse_failure;
      case ErrorKind::validation: return validation_failure;
      case ErrorKind::solver: return solver_failure;
    }
    return solver_failure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return solver_failure;
  }
}

}  // namespace pvcg::cli

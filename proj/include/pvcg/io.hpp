#pragma once

/// JSON market / QMAP files and result documents.
///
/// Market file:
///   {
///     "offers": [
///       {"id": "a", "bid": 1.0, "basis": "per_ad_call"},
///       {"id": "b", "bid": 8.0, "basis": "per_response", "response_rate": 0.1, "cap": 0.5}
///     ],
///     "covariance": [[1.0, 0.0], [0.0, 1.0]],
///     "q": 0.5,
///     "pool_size": 1000
///   }
///
/// QMAP file:
///   {"form": "max" | "min", "A": [[...]], "b": [...], "c": [...], "q": 0.5, "m": 1}
///
/// Doubles are written with shortest round-trip precision, so parsing an
/// emitted document reproduces every number bit for bit.

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pvcg/allocation.hpp"
#include "pvcg/errors.hpp"
#include "pvcg/market_model.hpp"
#include "pvcg/vcg_pricing.hpp"
#include "pvcg/verification.hpp"

namespace pvcg::io {

using json = nlohmann::ordered_json;

namespace detail {

inline const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + " is missing \"" + key + "\"");
  return *it;
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(where + " must be a number");
  return v.get<double>();
}

inline std::int64_t integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ParseError(where + " must be an integer");
  return v.get<std::int64_t>();
}

inline Eigen::VectorXd vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + " must be an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = number(v[i], where + "[" + std::to_string(i) + "]");
  return out;
}

inline Eigen::MatrixXd matrix(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + " must be an array of rows");
  const std::size_t rows = v.size();
  const std::size_t cols = rows ? (v[0].is_array() ? v[0].size() : 0) : 0;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string rw = where + "[" + std::to_string(r) + "]";
    if (!v[r].is_array() || v[r].size() != cols) throw ParseError(rw + " must be a row of " + std::to_string(cols) + " numbers");
    for (std::size_t c = 0; c < cols; ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(v[r][c], rw + "[" + std::to_string(c) + "]");
  }
  return out;
}

inline json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json optional_array(const std::vector<std::optional<double>>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
  return a;
}

/// JSON has no infinity; unbounded margins become null.
inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace detail

inline json to_json(const MarketInput& m) {
  json offers = json::array();
  for (const Offer& o : m.offers) {
    json j;
    j["id"] = o.id;
    j["bid"] = o.bid;
    j["basis"] = to_string(o.basis);
    if (o.response_rate) j["response_rate"] = *o.response_rate;
    if (o.cap) j["cap"] = *o.cap;
    offers.push_back(std::move(j));
  }
  json out;
  out["offers"] = std::move(offers);
  out["covariance"] = detail::to_json(m.sigma);
  out["q"] = m.q;
  out["pool_size"] = m.pool_size;
  return out;
}

inline MarketInput market_from_json(const json& doc) {
  MarketInput m;
  const json& offers = detail::field(doc, "offers", "market");
  if (!offers.is_array()) throw ParseError("market.offers must be an array");
  for (std::size_t i = 0; i < offers.size(); ++i) {
    const std::string where = "offers[" + std::to_string(i) + "]";
    const json& o = offers[i];
    Offer off;
    const json& id = detail::field(o, "id", where);
    if (!id.is_string()) throw ParseError(where + ".id must be a string");
    off.id = id.get<std::string>();
    off.bid = detail::number(detail::field(o, "bid", where), where + ".bid");
    const json& basis = detail::field(o, "basis", where);
    const std::string b = basis.is_string() ? basis.get<std::string>() : "";
    if (b == "per_ad_call") off.basis = PaymentBasis::per_ad_call;
    else if (b == "per_response") off.basis = PaymentBasis::per_response;
    else throw ParseError(where + ".basis must be \"per_ad_call\" or \"per_response\"");
    if (auto it = o.find("response_rate"); it != o.end() && !it->is_null())
      off.response_rate = detail::number(*it, where + ".response_rate");
    if (auto it = o.find("cap"); it != o.end() && !it->is_null()) off.cap = detail::number(*it, where + ".cap");
    m.offers.push_back(std::move(off));
  }
  m.sigma = detail::matrix(detail::field(doc, "covariance", "market"), "covariance");
  m.q = detail::number(detail::field(doc, "q", "market"), "q");
  m.pool_size = detail::integer(detail::field(doc, "pool_size", "market"), "pool_size");
  return m;
}

inline json to_json(const QmapInstance& q) {
  json out;
  out["form"] = q.form == QmapForm::max_form ? "max" : "min";
  out["A"] = detail::to_json(q.a_matrix);
  out["b"] = detail::to_json(q.b_vector);
  out["c"] = detail::to_json(q.c_vector);
  out["q"] = q.q;
  out["m"] = q.m;
  return out;
}

inline QmapInstance qmap_from_json(const json& doc) {
  QmapInstance q;
  const json& form = detail::field(doc, "form", "qmap");
  const std::string f = form.is_string() ? form.get<std::string>() : "";
  if (f == "max") q.form = QmapForm::max_form;
  else if (f == "min") q.form = QmapForm::min_form;
  else throw ParseError("qmap.form must be \"max\" or \"min\"");
  q.a_matrix = detail::matrix(detail::field(doc, "A", "qmap"), "A");
  q.b_vector = detail::vector(detail::field(doc, "b", "qmap"), "b");
  q.c_vector = detail::vector(detail::field(doc, "c", "qmap"), "c");
  q.q = detail::number(detail::field(doc, "q", "qmap"), "q");
  q.m = detail::integer(detail::field(doc, "m", "qmap"), "m");
  return q;
}

inline json parse_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

inline std::string emit_market(const MarketInput& m) { return to_json(m).dump(2) + "\n"; }
inline MarketInput parse_market(std::string_view text) { return market_from_json(parse_text(text)); }
inline std::string emit_qmap(const QmapInstance& q) { return to_json(q).dump(2) + "\n"; }
inline QmapInstance parse_qmap(std::string_view text) { return qmap_from_json(parse_text(text)); }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// FNV-1a 64-bit digest of raw bytes, as "fnv1a64:<hex>".
inline std::string digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

// ---------------------------------------------------------------------------
// Result documents

inline json to_json(const Allocation& a) {
  json j;
  j["weights"] = detail::to_json(a.weights);
  j["call_counts"] = detail::to_json(a.call_counts);
  j["rounded_calls"] = a.rounded_calls;
  j["objective"] = a.objective_value;
  return j;
}

inline json solver_json(const Allocation& a) {
  json j;
  j["iterations"] = a.iterations;
  j["kkt_residual"] = a.kkt_residual;
  j["degenerate"] = a.degenerate;
  return j;
}

inline json to_json(const PriceSchedule& s) {
  json j;
  j["offer_prices"] = detail::to_json(s.offer_prices);
  j["risk_charge"] = s.risk_charge ? json(*s.risk_charge) : json(nullptr);
  j["publisher_revenue"] = s.publisher_revenue;
  j["per_ad_call"] = detail::optional_array(s.per_ad_call);
  j["per_response"] = detail::optional_array(s.per_response);
  j["restricted_objectives"] = detail::to_json(s.restricted_objectives);
  j["full_objective"] = s.full_objective;
  return j;
}

inline json to_json(const PropertyReport& r) {
  json j;
  j["property"] = r.property;
  j["passed"] = r.passed();
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["skipped"] = r.skipped;
  j["worst_margin"] = detail::finite_or_null(r.worst_margin);
  j["seed"] = r.seed;
  j["restriction_checks"] = r.restriction_checks;
  j["restriction_violations"] = r.restriction_violations;
  j["counterexamples"] = r.counterexamples;
  return j;
}

}  // namespace pvcg::io

#pragma once

// Canonical JSON for MsmParams and FittedModel. Field order is fixed and
// doubles are written in shortest round-trip form, so serialize -> parse ->
// serialize is byte-identical.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "msrisk/core.hpp"

namespace msrisk {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v(i)));
  return a;
}

inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(number_or_null(m(i, j)));
    a.push_back(std::move(row));
  }
  return a;
}

inline double number_from(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  require(j.is_number(), ErrorCode::BadConfig, "expected a number in JSON");
  return j.get<double>();
}

inline Vector vector_from(const Json& j) {
  require(j.is_array(), ErrorCode::BadConfig, "expected a JSON array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_from(j[i]);
  return v;
}

inline Matrix matrix_from(const Json& j) {
  require(j.is_array(), ErrorCode::BadConfig, "expected a JSON array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    require(row.is_array() && static_cast<Index>(row.size()) == cols, ErrorCode::BadConfig, "ragged JSON matrix");
    for (Index c = 0; c < cols; ++c) m(r, c) = number_from(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

inline const Json& field(const Json& j, const char* name) {
  require(j.is_object() && j.contains(name), ErrorCode::BadConfig, std::string("missing JSON field '") + name + "'");
  return j.at(name);
}

}  // namespace detail

inline Json to_json(const MsmParams& p) {
  Json j;
  j["L"] = p.L();
  j["delta"] = detail::to_json(p.delta);
  j["Q"] = detail::to_json(p.Q);
  Json mu = Json::array();
  for (const auto& m : p.mu) mu.push_back(detail::to_json(m));
  j["mu"] = std::move(mu);
  Json sig = Json::array();
  for (const auto& s : p.Sigma) sig.push_back(detail::to_json(s));
  j["Sigma"] = std::move(sig);
  if (p.has_nu()) {
    Json nu = Json::array();
    for (double v : p.nu) nu.push_back(v);
    j["nu"] = std::move(nu);
  } else {
    j["nu"] = nullptr;
  }
  return j;
}

inline MsmParams params_from_json(const Json& j) {
  MsmParams p;
  p.delta = detail::vector_from(detail::field(j, "delta"));
  p.Q = detail::matrix_from(detail::field(j, "Q"));
  for (const auto& m : detail::field(j, "mu")) p.mu.push_back(detail::vector_from(m));
  for (const auto& s : detail::field(j, "Sigma")) p.Sigma.push_back(detail::matrix_from(s));
  if (j.contains("nu") && !j.at("nu").is_null())
    for (const auto& v : j.at("nu")) p.nu.push_back(detail::number_from(v));
  return p;
}

inline Json to_json(const FittedModel& m) {
  Json j;
  j["params"] = to_json(m.params);
  j["family"] = std::string(to_string(m.family));
  j["loglik"] = m.loglik;
  j["n_params"] = m.n_params;
  j["aic"] = m.aic;
  j["bic"] = m.bic;
  j["filtered"] = detail::to_json(m.filtered);
  j["smoothed"] = detail::to_json(m.smoothed);
  Json pairs = Json::array();
  for (const auto& x : m.smoothed_pairs) pairs.push_back(detail::to_json(x));
  j["smoothed_pairs"] = std::move(pairs);
  j["w_hat"] = m.w_hat.size() > 0 ? detail::to_json(m.w_hat) : Json(nullptr);
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  Json rl = Json::array();
  for (double v : m.restart_logliks) rl.push_back(detail::number_or_null(v));
  j["restart_logliks"] = std::move(rl);
  return j;
}

inline FittedModel model_from_json(const Json& j) {
  FittedModel m;
  m.params = params_from_json(detail::field(j, "params"));
  m.family = parse_family(detail::field(j, "family").get<std::string>());
  m.loglik = detail::number_from(detail::field(j, "loglik"));
  m.n_params = detail::field(j, "n_params").get<int>();
  m.aic = detail::number_from(detail::field(j, "aic"));
  m.bic = detail::number_from(detail::field(j, "bic"));
  m.filtered = detail::matrix_from(detail::field(j, "filtered"));
  m.smoothed = detail::matrix_from(detail::field(j, "smoothed"));
  for (const auto& x : detail::field(j, "smoothed_pairs")) m.smoothed_pairs.push_back(detail::matrix_from(x));
  if (j.contains("w_hat") && !j.at("w_hat").is_null()) m.w_hat = detail::matrix_from(j.at("w_hat"));
  m.converged = detail::field(j, "converged").get<bool>();
  m.iterations = detail::field(j, "iterations").get<int>();
  for (const auto& v : detail::field(j, "restart_logliks")) m.restart_logliks.push_back(detail::number_from(v));
  return m;
}

}  // namespace msrisk

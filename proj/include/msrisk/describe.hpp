#pragma once

// Per-asset descriptive statistics of a return panel.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <vector>

#include "msrisk/core.hpp"

namespace msrisk {

struct AssetSummary {
  std::string asset;
  double min = 0.0;
  double max = 0.0;
  double mean_x1e3 = 0.0;
  double std = 0.0;        // T-1 denominator
  double skewness = 0.0;   // m3 / m2^1.5
  double kurtosis = 0.0;   // raw: m4 / m2^2 (3 for a Gaussian)
  double q01 = 0.0;        // 1% quantile, linear interpolation (type 7)
  double jarque_bera = 0.0;
};

inline constexpr Index kDescribeMinRows = 8;

/// Type-7 sample quantile.
inline double quantile_type7(std::vector<double> x, double prob) {
  require(!x.empty(), ErrorCode::InsufficientData, "quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline std::vector<AssetSummary> describe(const ReturnPanel& panel) {
  const Index T = panel.T();
  require(T >= kDescribeMinRows, ErrorCode::InsufficientData, "describe needs at least 8 observations");
  std::vector<AssetSummary> out;
  for (Index j = 0; j < panel.p(); ++j) {
    const Vector x = panel.values().col(j);
    const double n = static_cast<double>(T);
    const double mean = x.mean();
    const Vector c = x.array() - mean;
    const double m2 = c.squaredNorm() / n;
    require(m2 > 0.0, ErrorCode::InsufficientData,
            "asset '" + panel.assets()[static_cast<std::size_t>(j)] + "' has zero variance");
    const double m3 = c.array().cube().sum() / n;
    const double m4 = c.array().square().square().sum() / n;
    AssetSummary s;
    s.asset = panel.assets()[static_cast<std::size_t>(j)];
    s.min = x.minCoeff();
    s.max = x.maxCoeff();
    s.mean_x1e3 = 1e3 * mean;
    s.std = std::sqrt(c.squaredNorm() / (n - 1.0));
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2);
    s.q01 = quantile_type7(std::vector<double>(x.data(), x.data() + x.size()), 0.01);
    s.jarque_bera = n / 6.0 * (s.skewness * s.skewness + 0.25 * (s.kurtosis - 3.0) * (s.kurtosis - 3.0));
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string describe_csv(const std::vector<AssetSummary>& rows) {
  auto num = [](double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  std::string out = "asset,min,max,mean_x1e3,std,skewness,kurtosis,q01,jarque_bera\n";
  for (const auto& r : rows)
    out += r.asset + "," + num(r.min) + "," + num(r.max) + "," + num(r.mean_x1e3) + "," + num(r.std) + "," +
           num(r.skewness) + "," + num(r.kurtosis) + "," + num(r.q01) + "," + num(r.jarque_bera) + "\n";
  return out;
}

}  // namespace msrisk

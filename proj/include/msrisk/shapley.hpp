#pragma once

// Exact Shapley attribution of a target's conditional tail risk.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msrisk/core.hpp"
#include "msrisk/inference.hpp"
#include "msrisk/risk.hpp"

namespace msrisk {

inline constexpr int kMaxPlayers = 20;

/// theta_target(H) for every subset H of the players, indexed by bitmask
/// (bit k set <=> players[k] in H).
struct SubsetValueTable {
  Index target = 0;
  RiskMeasure measure = RiskMeasure::DeltaMCoVaR;
  std::vector<Index> players;
  std::vector<double> values;

  int n() const { return static_cast<int>(players.size()); }

  void validate() const {
    require(n() >= 1 && n() <= kMaxPlayers, ErrorCode::InvalidArgument, "Shapley tables need 1..20 players");
    require(values.size() == (std::size_t{1} << n()), ErrorCode::IncompleteTable,
            "value table must hold 2^n entries");
    for (double v : values) require(std::isfinite(v), ErrorCode::IncompleteTable, "value table has missing entries");
    require(values[0] == 0.0, ErrorCode::InvalidArgument, "value of the empty coalition must be 0");
  }
};

enum class ValueMode { Absolute, Signed };

struct ShapleyOptions {
  ValueMode mode = ValueMode::Absolute;
  RiskOptions risk;
  int threads = 0;
};

/// Value table on one joint mixture: theta(H) is the Delta measure with
/// distressed set H, the remaining players held at the median level.
inline SubsetValueTable build_value_table(const MixtureDistribution& mix, Index target, RiskMeasure measure,
                                          double tau1, double tau2, const ShapleyOptions& opts = {}) {
  require(measure == RiskMeasure::DeltaMCoVaR || measure == RiskMeasure::DeltaMCoES, ErrorCode::InvalidArgument,
          "Shapley attribution needs DeltaMCoVaR or DeltaMCoES");
  const Index p = mix.dim();
  require(target >= 0 && target < p, ErrorCode::InvalidArgument, "target index out of range");
  require(p - 1 >= 1 && p - 1 <= kMaxPlayers, ErrorCode::InvalidArgument, "Shapley attribution needs 2..21 assets");
  SubsetValueTable table;
  table.target = target;
  table.measure = measure;
  for (Index j = 0; j < p; ++j)
    if (j != target) table.players.push_back(j);
  const int n = table.n();
  table.values.assign(std::size_t{1} << n, 0.0);
  MarginalLevels levels(mix);
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    ConditioningSpec spec;
    spec.target = target;
    spec.tau1 = tau1;
    spec.tau2 = tau2;
    for (int k = 0; k < n; ++k)
      if (mask & (1u << k)) spec.distressed.push_back(table.players[static_cast<std::size_t>(k)]);
    const double v = evaluate_measure(mix, measure, spec, levels, opts.risk);
    table.values[mask] = opts.mode == ValueMode::Absolute ? std::abs(v) : v;
  }
  return table;
}

/// Value table for the h-step predictive mixture at time t of a fitted model.
inline SubsetValueTable build_value_table(const FittedModel& model, Index target, RiskMeasure measure, double tau1,
                                          double tau2, Index t, int h = 1, const ShapleyOptions& opts = {}) {
  return build_value_table(mixture_at(model, t, h, false), target, measure, tau1, tau2, opts);
}

namespace detail {
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

/// |H|! (n - |H| - 1)! / n! for |H| = 0..n-1.
inline std::vector<double> shapley_weights(int n) {
  std::vector<double> fact(static_cast<std::size_t>(n) + 1, 1.0);
  for (int k = 1; k <= n; ++k) fact[static_cast<std::size_t>(k)] = fact[static_cast<std::size_t>(k - 1)] * k;
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s)
    w[static_cast<std::size_t>(s)] =
        fact[static_cast<std::size_t>(s)] * fact[static_cast<std::size_t>(n - s - 1)] / fact[static_cast<std::size_t>(n)];
  return w;
}
}  // namespace detail

/// ShV(j) = sum over H not containing j of w(|H|) [theta(H + j) - theta(H)].
inline std::vector<double> shapley_values(const SubsetValueTable& table) {
  table.validate();
  const int n = table.n();
  const auto w = detail::shapley_weights(n);
  std::vector<double> shares(static_cast<std::size_t>(n));
  std::vector<double> terms;
  terms.reserve(std::size_t{1} << (n - 1));
  for (int j = 0; j < n; ++j) {
    terms.clear();
    const std::uint32_t bit = 1u << j;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      if (mask & bit) continue;
      const int s = std::popcount(mask);
      terms.push_back(w[static_cast<std::size_t>(s)] * (table.values[mask | bit] - table.values[mask]));
    }
    // sorted so the result depends only on the multiset of terms; relabeling
    // players then permutes shares bit for bit
    std::sort(terms.begin(), terms.end());
    shares[static_cast<std::size_t>(j)] = detail::pairwise_sum(terms.data(), terms.size());
  }
  return shares;
}

inline ShapleyReport shapley_report(const SubsetValueTable& table) {
  ShapleyReport r;
  r.target = table.target;
  r.measure = table.measure;
  r.players = table.players;
  r.subset_values = table.values;
  r.shares = shapley_values(table);
  r.total = table.values.back();
  return r;
}

/// Whether the table satisfies the properties the attribution is usually
/// expected to have. These are reported, not enforced.
struct GameProperties {
  bool individually_rational = true;      // ShV(j) >= theta({j})
  std::optional<bool> super_additive;     // theta(A u B) >= theta(A) + theta(B), A and B disjoint; n <= 12 only
};

inline GameProperties game_properties(const SubsetValueTable& table, const std::vector<double>& shares,
                                      double tol = 1e-12) {
  GameProperties g;
  const int n = table.n();
  for (int j = 0; j < n; ++j)
    if (shares[static_cast<std::size_t>(j)] < table.values[1u << j] - tol) g.individually_rational = false;
  if (n <= 12) {
    bool ok = true;
    const std::uint32_t full = (1u << n) - 1;
    for (std::uint32_t a = 1; a <= full && ok; ++a) {
      const std::uint32_t rest = full & ~a;
      for (std::uint32_t b = rest; b > 0; b = (b - 1) & rest) {
        if (b < a) continue;
        if (table.values[a | b] < table.values[a] + table.values[b] - tol) {
          ok = false;
          break;
        }
      }
    }
    g.super_additive = ok;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Attribution over time

struct AttributionPoint {
  Index t = 0;
  std::optional<ShapleyReport> report;  // empty marks a gap
  std::vector<double> share_pct;        // share_j / sum_k share_k * 100
  std::string error;
};

struct StateShareSummary {
  int state = 0;
  Index count = 0;
  std::vector<double> mean_pct;
  std::vector<double> var_pct;
};

struct AttributionPath {
  Index target = 0;
  RiskMeasure measure = RiskMeasure::DeltaMCoVaR;
  std::vector<Index> players;
  std::vector<AttributionPoint> points;
  std::vector<StateShareSummary> by_state;
};

/// Shares at every t plus their mean / variance within each decoded state.
inline AttributionPath attribution_path(const FittedModel& model, Index target, RiskMeasure measure, double tau1,
                                        double tau2, const std::vector<int>& states, int h = 1,
                                        const ShapleyOptions& opts = {}) {
  const Index T = model.T();
  require(static_cast<Index>(states.size()) == T, ErrorCode::InvalidArgument, "state path length mismatch");
  AttributionPath path;
  path.target = target;
  path.measure = measure;
  for (Index j = 0; j < model.params.p(); ++j)
    if (j != target) path.players.push_back(j);
  path.points.resize(static_cast<std::size_t>(T));
  ShapleyOptions inner = opts;
  inner.threads = 1;
  parallel_for(static_cast<int>(T), worker_count(opts.threads), [&](int ti) {
    auto& pt = path.points[static_cast<std::size_t>(ti)];
    pt.t = ti;
    try {
      const auto table = build_value_table(model, target, measure, tau1, tau2, ti, h, inner);
      pt.report = shapley_report(table);
      double sum = 0.0;
      for (double s : pt.report->shares) sum += s;
      pt.share_pct.resize(pt.report->shares.size());
      for (std::size_t k = 0; k < pt.share_pct.size(); ++k)
        pt.share_pct[k] = sum != 0.0 ? 100.0 * pt.report->shares[k] / sum : std::numeric_limits<double>::quiet_NaN();
    } catch (const Error& e) {
      pt.error = e.what();
    }
  });

  const std::size_t n = path.players.size();
  for (int s = 0; s < model.params.L(); ++s) {
    StateShareSummary sum;
    sum.state = s;
    sum.mean_pct.assign(n, 0.0);
    sum.var_pct.assign(n, 0.0);
    std::vector<std::vector<double>> xs(n);
    for (Index t = 0; t < T; ++t) {
      const auto& pt = path.points[static_cast<std::size_t>(t)];
      if (states[static_cast<std::size_t>(t)] != s || !pt.report) continue;
      bool finite = true;
      for (double v : pt.share_pct) finite = finite && std::isfinite(v);
      if (!finite) continue;
      for (std::size_t k = 0; k < n; ++k) xs[k].push_back(pt.share_pct[k]);
    }
    sum.count = n > 0 ? static_cast<Index>(xs[0].size()) : 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& x = xs[k];
      if (x.empty()) {
        sum.mean_pct[k] = sum.var_pct[k] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double m = 0.0;
      for (double v : x) m += v;
      m /= static_cast<double>(x.size());
      double v2 = 0.0;
      for (double v : x) v2 += (v - m) * (v - m);
      sum.mean_pct[k] = m;
      sum.var_pct[k] = x.size() > 1 ? v2 / static_cast<double>(x.size() - 1) : 0.0;
    }
    path.by_state.push_back(std::move(sum));
  }
  return path;
}

}  // namespace msrisk

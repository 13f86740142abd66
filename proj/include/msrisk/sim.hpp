#pragma once

// Simulation from Markov-switching models and mixtures, including the
// slab-conditioning sampler used as a Monte-Carlo oracle.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "msrisk/core.hpp"
#include "msrisk/rng.hpp"

namespace msrisk {

struct SimOutput {
  ReturnPanel panel;
  std::vector<int> states;
  std::uint64_t seed = 0;
};

namespace detail {

inline int draw_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, double u) {
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int k = 0; k < n; ++k) {
    acc += probs(k);
    if (u < acc) return k;
  }
  for (int k = n - 1; k >= 0; --k)
    if (probs(k) > 0.0) return k;
  return n - 1;
}

/// Weekly ISO dates starting 2000-01-07. Panels too long for four-digit
/// years under a weekly step switch to daily dates from 0001-01-01.
inline std::vector<std::string> weekly_dates(Index T) {
  using namespace std::chrono;
  constexpr Index kWeeklyMax = 400000;
  constexpr Index kDailyMax = 3652000;
  require(T <= kDailyMax, ErrorCode::InvalidArgument, "panel too long for ISO dates");
  const bool weekly = T <= kWeeklyMax;
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(T));
  sys_days d = weekly ? sys_days{year{2000} / January / 7} : sys_days{year{1} / January / 1};
  const days step{weekly ? 7 : 1};
  for (Index t = 0; t < T; ++t) {
    const year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    out.emplace_back(buf);
    d += step;
  }
  return out;
}

inline std::vector<std::string> default_labels(Index p) {
  std::vector<std::string> out;
  for (Index j = 0; j < p; ++j) out.push_back("A" + std::to_string(j + 1));
  return out;
}

}  // namespace detail

/// Draws T observations: S_1 ~ delta, S_t | S_{t-1} ~ Q row, Gaussian draws
/// through the Cholesky factor and Student-t draws as Gaussian / sqrt(w),
/// w ~ Gamma(nu/2, rate nu/2).
inline SimOutput simulate(const MsmParams& params, ModelFamily family, Index T, std::uint64_t seed,
                          std::vector<std::string> assets = {}) {
  require_valid(params, family);
  require(T >= 2, ErrorCode::InvalidArgument, "simulate needs T >= 2 to form a panel");
  const Index p = params.p();
  if (assets.empty()) assets = detail::default_labels(p);
  require(static_cast<Index>(assets.size()) == p, ErrorCode::InvalidArgument, "asset label count mismatch");
  const int L = params.L();
  std::vector<Matrix> chol;
  for (int l = 0; l < L; ++l) chol.push_back(cholesky(params.Sigma[static_cast<std::size_t>(l)]).matrixL());

  RandomStream chain(seed, "sim-chain");
  RandomStream noise(seed, "sim-noise");
  RandomStream mixing(seed, "sim-mixing");
  std::normal_distribution<double> normal;
  std::vector<int> states(static_cast<std::size_t>(T));
  Matrix Y(T, p);
  Vector z(p);
  int s = detail::draw_index(params.delta.transpose(), chain.uniform());
  for (Index t = 0; t < T; ++t) {
    if (t > 0) s = detail::draw_index(params.Q.row(s), chain.uniform());
    states[static_cast<std::size_t>(t)] = s;
    for (Index j = 0; j < p; ++j) z(j) = normal(noise);
    Vector y = chol[static_cast<std::size_t>(s)] * z;
    if (family == ModelFamily::StudentT) {
      const double nu = params.nu[static_cast<std::size_t>(s)];
      std::gamma_distribution<double> gamma(0.5 * nu, 2.0 / nu);
      y /= std::sqrt(gamma(mixing));
    }
    Y.row(t) = (params.mu[static_cast<std::size_t>(s)] + y).transpose();
  }
  return {ReturnPanel(detail::weekly_dates(T), std::move(assets), std::move(Y)), std::move(states), seed};
}

/// n independent draws (rows) from a mixture.
inline Matrix sample_mixture(const MixtureDistribution& mix, Index n, std::uint64_t seed) {
  mix.validate();
  const Index d = mix.dim();
  std::vector<Matrix> chol;
  for (const auto& c : mix.components) chol.push_back(cholesky(c.Sigma).matrixL());
  RandomStream pick(seed, "mixture-pick");
  RandomStream noise(seed, "mixture-noise");
  RandomStream mixing(seed, "mixture-mixing");
  std::normal_distribution<double> normal;
  Matrix out(n, d);
  Vector z(d);
  for (Index i = 0; i < n; ++i) {
    const int l = detail::draw_index(mix.weights.transpose(), pick.uniform());
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    for (Index j = 0; j < d; ++j) z(j) = normal(noise);
    Vector y = chol[static_cast<std::size_t>(l)] * z;
    if (c.nu) {
      std::gamma_distribution<double> gamma(0.5 * *c.nu, 2.0 / *c.nu);
      y /= std::sqrt(gamma(mixing));
    }
    out.row(i) = (c.mu + y).transpose();
  }
  return out;
}

struct SlabSample {
  Matrix draws;  // n_target x d accepted joint draws
  double acceptance_rate = 0.0;
  std::uint64_t trials = 0;
};

inline constexpr double kDefaultSlabHalfwidth = 0.02;

/// Joint draws kept when every conditioned coordinate lies within
/// +-halfwidth * scale_j of its value, scale_j = sqrt(sum_l eta_l Sigma_l,jj).
/// The conditioned coordinates are drawn first so most rejections are cheap.
inline SlabSample slab_conditional_sample(const MixtureDistribution& mix, const std::vector<Index>& given,
                                          const Vector& values, double halfwidth, Index n_target, std::uint64_t seed) {
  mix.validate();
  const Index d = mix.dim();
  require(halfwidth > 0.0, ErrorCode::InvalidArgument, "halfwidth must be > 0");
  require(n_target >= 10000, ErrorCode::InvalidArgument, "n_target must be >= 1e4");
  require(!given.empty() && static_cast<Index>(given.size()) <= d, ErrorCode::InvalidArgument,
          "conditioning set must be nonempty");
  require(values.size() == static_cast<Index>(given.size()), ErrorCode::InvalidArgument, "values dimension mismatch");
  for (Index j : given) require(j >= 0 && j < d, ErrorCode::InvalidArgument, "conditioning index out of range");

  // Order: conditioned coordinates first, then the free ones.
  std::vector<Index> order = given;
  for (Index j : complement(d, given)) order.push_back(j);
  const Index g = static_cast<Index>(given.size());
  Vector lo(g), hi(g);
  for (Index k = 0; k < g; ++k) {
    const Index j = given[static_cast<std::size_t>(k)];
    double v = 0.0;
    for (Index l = 0; l < mix.size(); ++l) v += mix.weights(l) * mix.components[static_cast<std::size_t>(l)].Sigma(j, j);
    const double h = halfwidth * std::sqrt(v);
    lo(k) = values(k) - h;
    hi(k) = values(k) + h;
  }
  std::vector<Matrix> chol;
  std::vector<Vector> mus;
  for (const auto& c : mix.components) {
    chol.push_back(cholesky(select(c.Sigma, order, order)).matrixL());
    mus.push_back(select(c.mu, order));
  }

  RandomStream pick(seed, "slab-pick");
  RandomStream noise(seed, "slab-noise");
  RandomStream mixing(seed, "slab-mixing");
  std::normal_distribution<double> normal;
  SlabSample out;
  out.draws.resize(n_target, d);
  Vector z(d), y(d);
  Index accepted = 0;
  std::uint64_t trials = 0;
  while (accepted < n_target) {
    ++trials;
    const int l = detail::draw_index(mix.weights.transpose(), pick.uniform());
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    const Matrix& Lc = chol[static_cast<std::size_t>(l)];
    double scale = 1.0;
    if (c.nu) {
      std::gamma_distribution<double> gamma(0.5 * *c.nu, 2.0 / *c.nu);
      scale = 1.0 / std::sqrt(gamma(mixing));
    }
    bool inside = true;
    for (Index k = 0; k < d; ++k) {
      z(k) = normal(noise);
      if (k < g) {
        const double v = mus[static_cast<std::size_t>(l)](k) + scale * Lc.row(k).head(k + 1).dot(z.head(k + 1));
        if (v < lo(k) || v > hi(k)) {
          inside = false;
          break;
        }
      }
    }
    if (inside) {
      y = mus[static_cast<std::size_t>(l)] + scale * (Lc * z);
      for (Index k = 0; k < d; ++k) out.draws(accepted, order[static_cast<std::size_t>(k)]) = y(k);
      ++accepted;
    }
    if (trials % 1000000 == 0 && static_cast<double>(accepted) / static_cast<double>(trials) < 1e-6)
      fail(ErrorCode::InfeasibleSlab, "slab acceptance rate below 1e-6; widen the halfwidth");
  }
  out.trials = trials;
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(trials);
  return out;
}

}  // namespace msrisk

#pragma once

// Shared oracles for the test programs. Nothing here calls into the library's
// likelihood code; densities come from direct formulas.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "msrisk/msrisk.hpp"

namespace msrisk::testing {

inline ReturnPanel panel_of(const Matrix& values) {
  std::vector<std::string> dates, assets;
  for (Index t = 0; t < values.rows(); ++t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", static_cast<int>(1000 + t / 336),
                  static_cast<int>(1 + (t / 28) % 12), static_cast<int>(1 + t % 28));
    dates.emplace_back(buf);
  }
  for (Index j = 0; j < values.cols(); ++j) assets.push_back("x" + std::to_string(j + 1));
  return ReturnPanel(std::move(dates), std::move(assets), values);
}

/// Random valid parameters: well-conditioned covariances, Q with mass on the diagonal.
inline MsmParams random_params(int L, Index p, ModelFamily family, std::mt19937_64& gen, double spread = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  MsmParams prm;
  prm.delta = Vector(L);
  for (int l = 0; l < L; ++l) prm.delta(l) = 0.2 + u(gen);
  prm.delta /= prm.delta.sum();
  prm.Q = Matrix(L, L);
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < L; ++k) prm.Q(l, k) = (l == k ? 2.0 : 0.0) + 0.1 + u(gen);
    prm.Q.row(l) /= prm.Q.row(l).sum();
  }
  for (int l = 0; l < L; ++l) {
    Vector m(p);
    for (Index j = 0; j < p; ++j) m(j) = spread * z(gen);
    Matrix A(p, p);
    for (Index a = 0; a < p; ++a)
      for (Index b = 0; b < p; ++b) A(a, b) = 0.5 * z(gen);
    Matrix S = A * A.transpose() + (0.3 + l * 0.5) * Matrix::Identity(p, p);
    prm.mu.push_back(m);
    prm.Sigma.push_back(0.5 * (S + S.transpose()));
    if (family == ModelFamily::StudentT) prm.nu.push_back(3.0 + 10.0 * u(gen));
  }
  return prm;
}

/// Component log density from the textbook formulas (explicit inverse and
/// determinant via a dense LU, not Cholesky).
inline double oracle_logpdf(const Vector& y, const Vector& mu, const Matrix& S, std::optional<double> nu) {
  const double d = static_cast<double>(y.size());
  const Eigen::FullPivLU<Matrix> lu(S);
  const Vector r = y - mu;
  const double m2 = r.dot(lu.inverse() * r);
  const double logdet = std::log(lu.determinant());
  if (!nu) return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * m2;
  const double v = *nu;
  return std::lgamma(0.5 * (v + d)) - std::lgamma(0.5 * v) - 0.5 * d * std::log(v * std::numbers::pi) -
         0.5 * logdet - 0.5 * (v + d) * std::log1p(m2 / v);
}

struct PathOracle {
  double loglik = 0.0;
  Matrix posterior;               // T x L
  std::vector<Matrix> pairwise;   // T-1 of L x L
  std::vector<int> best_path;
  double best_logprob = -std::numeric_limits<double>::infinity();
};

/// Enumerates all L^T state paths.
inline PathOracle exhaustive_paths(const ReturnPanel& panel, const MsmParams& prm, ModelFamily family) {
  const Index T = panel.T();
  const int L = prm.L();
  Matrix logf(T, L);
  for (Index t = 0; t < T; ++t)
    for (int l = 0; l < L; ++l)
      logf(t, l) = oracle_logpdf(panel.values().row(t).transpose(), prm.mu[static_cast<std::size_t>(l)],
                                 prm.Sigma[static_cast<std::size_t>(l)],
                                 family == ModelFamily::StudentT ? std::optional<double>(prm.nu[static_cast<std::size_t>(l)])
                                                                 : std::nullopt);
  std::vector<int> s(static_cast<std::size_t>(T), 0);
  std::vector<double> lps;
  std::vector<std::vector<int>> paths;
  long total = 1;
  for (Index t = 0; t < T; ++t) total *= L;
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (Index t = 0; t < T; ++t) {
      s[static_cast<std::size_t>(t)] = static_cast<int>(c % L);
      c /= L;
    }
    double lp = std::log(prm.delta(s[0])) + logf(0, s[0]);
    for (Index t = 1; t < T; ++t)
      lp += std::log(prm.Q(s[static_cast<std::size_t>(t - 1)], s[static_cast<std::size_t>(t)])) +
            logf(t, s[static_cast<std::size_t>(t)]);
    lps.push_back(lp);
    paths.push_back(s);
  }
  PathOracle out;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lps.size(); ++i) {
    if (lps[i] > mx) {
      mx = lps[i];
      out.best_path = paths[i];
    }
  }
  out.best_logprob = mx;
  double sum = 0.0;
  for (double v : lps) sum += std::exp(v - mx);
  out.loglik = mx + std::log(sum);
  out.posterior = Matrix::Zero(T, L);
  out.pairwise.assign(static_cast<std::size_t>(T - 1), Matrix::Zero(L, L));
  for (std::size_t i = 0; i < lps.size(); ++i) {
    const double w = std::exp(lps[i] - out.loglik);
    for (Index t = 0; t < T; ++t) {
      out.posterior(t, paths[i][static_cast<std::size_t>(t)]) += w;
      if (t + 1 < T)
        out.pairwise[static_cast<std::size_t>(t)](paths[i][static_cast<std::size_t>(t)],
                                                  paths[i][static_cast<std::size_t>(t + 1)]) += w;
    }
  }
  return out;
}

/// Random panel drawn with the standard library generator from given parameters.
inline ReturnPanel draw_panel(const MsmParams& prm, ModelFamily family, Index T, std::mt19937_64& gen) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const Index p = prm.p();
  Matrix Y(T, p);
  int s = 0;
  auto pick = [&](const Eigen::RowVectorXd& probs) {
    double r = u(gen), c = 0.0;
    for (int l = 0; l < probs.size(); ++l) {
      c += probs(l);
      if (r < c) return l;
    }
    return static_cast<int>(probs.size()) - 1;
  };
  for (Index t = 0; t < T; ++t) {
    s = t == 0 ? pick(prm.delta.transpose()) : pick(prm.Q.row(s));
    const Matrix Lc = prm.Sigma[static_cast<std::size_t>(s)].llt().matrixL();
    Vector e(p);
    for (Index j = 0; j < p; ++j) e(j) = z(gen);
    Vector y = Lc * e;
    if (family == ModelFamily::StudentT) {
      std::chi_squared_distribution<double> chi(prm.nu[static_cast<std::size_t>(s)]);
      y /= std::sqrt(chi(gen) / prm.nu[static_cast<std::size_t>(s)]);
    }
    Y.row(t) = (prm.mu[static_cast<std::size_t>(s)] + y).transpose();
  }
  return panel_of(Y);
}

}  // namespace msrisk::testing

#pragma once

// Multivariate Gaussian and Student-t lower-orthant probabilities
// P(Y <= upper) for dimensions up to kMaxCdfDim.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/owens_t.hpp>

#include "msrisk/core.hpp"
#include "msrisk/rng.hpp"
#include "msrisk/special.hpp"

namespace msrisk {

inline constexpr Index kMaxCdfDim = 12;
inline constexpr double kDefaultCdfTol = 1e-5;

struct CdfEstimate {
  double value = 0.0;
  double error = 0.0;  // three-sigma randomization error (0 for exact paths)
};

namespace detail {

/// Bivariate standard normal P(Z1 <= h, Z2 <= k) with correlation rho via
/// Owen's T function.
inline double bivariate_normal_cdf(double h, double k, double rho) {
  if (h == -std::numeric_limits<double>::infinity() || k == -std::numeric_limits<double>::infinity()) return 0.0;
  if (std::isinf(h)) return normal_cdf(k);
  if (std::isinf(k)) return normal_cdf(h);
  if (rho == 0.0) return normal_cdf(h) * normal_cdf(k);
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  if (h == 0.0 && k == 0.0) return 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
  auto owen = [&](double x, double y) {
    // T(x, (y - rho x) / (x s)), including the x == 0 limit.
    if (x == 0.0) return (y - rho * x) >= 0.0 ? 0.25 : -0.25;
    return boost::math::owens_t(x, (y - rho * x) / (x * s));
  };
  double beta = 0.0;
  if (h * k < 0.0 || (h * k == 0.0 && h + k < 0.0)) beta = 0.5;
  const double v = 0.5 * (normal_cdf(h) + normal_cdf(k)) - owen(h, k) - owen(k, h) - beta;
  return std::clamp(v, 0.0, std::min(normal_cdf(h), normal_cdf(k)));
}

inline constexpr std::array<double, 12> kLatticePrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

/// Genz separation-of-variables integrand over [0,1]^(d-1), evaluated on a
/// randomly shifted Richtmyer lattice with the baker's (tent) transform and
/// antithetic pairs. Variables are reordered so the most constrained come first.
inline CdfEstimate genz_rqmc(const Vector& upper, const Matrix& corr, double tol, std::uint64_t seed) {
  const Index d = upper.size();
  Vector b = upper;
  Matrix c = corr;
  Matrix L = Matrix::Zero(d, d);
  Vector y = Vector::Zero(d);

  for (Index i = 0; i < d; ++i) {
    Index best = i;
    double best_p = 2.0;
    for (Index j = i; j < d; ++j) {
      double s = 0.0, v = c(j, j);
      for (Index k = 0; k < i; ++k) {
        s += L(j, k) * y(k);
        v -= L(j, k) * L(j, k);
      }
      v = std::max(v, 1e-300);
      const double pj = normal_cdf((b(j) - s) / std::sqrt(v));
      if (pj < best_p) {
        best_p = pj;
        best = j;
      }
    }
    if (best != i) {
      std::swap(b(i), b(best));
      c.row(i).swap(c.row(best));
      c.col(i).swap(c.col(best));
      L.row(i).swap(L.row(best));
    }
    double v = c(i, i);
    for (Index k = 0; k < i; ++k) v -= L(i, k) * L(i, k);
    require(v > 0.0, ErrorCode::NotPositiveDefinite, "correlation matrix is not positive definite");
    L(i, i) = std::sqrt(v);
    for (Index j = i + 1; j < d; ++j) {
      double s = c(j, i);
      for (Index k = 0; k < i; ++k) s -= L(j, k) * L(i, k);
      L(j, i) = s / L(i, i);
    }
    double s = 0.0;
    for (Index k = 0; k < i; ++k) s += L(i, k) * y(k);
    const double u = (b(i) - s) / L(i, i);
    const double pu = normal_cdf(u);
    y(i) = pu > 1e-300 ? -normal_pdf(u) / pu : u;
  }

  const double e0 = normal_cdf(b(0) / L(0, 0));
  const Index m = d - 1;
  std::vector<double> q(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const double r = std::sqrt(kLatticePrimes[static_cast<std::size_t>(i)]);
    q[static_cast<std::size_t>(i)] = r - std::floor(r);
  }

  std::vector<double> yy(static_cast<std::size_t>(d));
  auto integrand = [&](const std::vector<double>& w) {
    double e = e0;
    double f = e0;
    for (Index i = 1; i < d; ++i) {
      const double arg = std::clamp(w[static_cast<std::size_t>(i - 1)] * e, 1e-300, 1.0 - 1e-16);
      yy[static_cast<std::size_t>(i - 1)] = normal_quantile(arg);
      double s = 0.0;
      for (Index k = 0; k < i; ++k) s += L(i, k) * yy[static_cast<std::size_t>(k)];
      e = normal_cdf((b(i) - s) / L(i, i));
      f *= e;
      if (f == 0.0) break;
    }
    return f;
  };

  constexpr int kShifts = 12;
  RandomStream rng(seed, "mvn-cdf-lattice");
  std::vector<std::vector<double>> shifts(kShifts, std::vector<double>(static_cast<std::size_t>(m)));
  for (auto& sh : shifts)
    for (auto& x : sh) x = rng.uniform();

  CdfEstimate est;
  std::vector<double> w(static_cast<std::size_t>(m)), w2(static_cast<std::size_t>(m));
  constexpr std::int64_t kMaxPoints = std::int64_t{1} << 20;
  for (std::int64_t n = 256;; n *= 2) {
    double sum = 0.0, sum2 = 0.0;
    for (const auto& sh : shifts) {
      double acc = 0.0;
      for (std::int64_t k = 1; k <= n; ++k) {
        for (Index i = 0; i < m; ++i) {
          const auto ui = static_cast<std::size_t>(i);
          double x = static_cast<double>(k) * q[ui] + sh[ui];
          x -= std::floor(x);
          x = std::abs(2.0 * x - 1.0);
          w[ui] = x;
          w2[ui] = 1.0 - x;
        }
        acc += 0.5 * (integrand(w) + integrand(w2));
      }
      const double mean = acc / static_cast<double>(n);
      sum += mean;
      sum2 += mean * mean;
    }
    est.value = sum / kShifts;
    const double var = std::max(0.0, (sum2 / kShifts - est.value * est.value) * kShifts / (kShifts - 1));
    est.error = 3.0 * std::sqrt(var / kShifts);
    if (est.error <= tol || n >= kMaxPoints) break;
  }
  est.value = std::clamp(est.value, 0.0, 1.0);
  return est;
}

inline constexpr std::uint64_t kCdfSeed = 0x6d737269736b3031ULL;

}  // namespace detail

/// Standardized lower-orthant probability P(Z <= upper), Z ~ N(0, corr).
/// Coordinates with an infinite upper bound are integrated out exactly.
inline CdfEstimate std_mvn_cdf(const Vector& upper, const Matrix& corr, double tol = kDefaultCdfTol) {
  std::vector<Index> active;
  for (Index i = 0; i < upper.size(); ++i) {
    if (upper(i) == -std::numeric_limits<double>::infinity() || std::isnan(upper(i))) return {0.0, 0.0};
    if (upper(i) != std::numeric_limits<double>::infinity()) active.push_back(i);
  }
  const auto d = static_cast<Index>(active.size());
  require(d <= kMaxCdfDim, ErrorCode::UnsupportedDimension,
          "multivariate CDF supports at most 12 dimensions, got " + std::to_string(d));
  if (d == 0) return {1.0, 0.0};
  if (d == 1) return {normal_cdf(upper(active[0])), 0.0};
  if (d == 2) {
    return {detail::bivariate_normal_cdf(upper(active[0]), upper(active[1]), corr(active[0], active[1])), 0.0};
  }
  return detail::genz_rqmc(select(upper, active), select(corr, active, active), tol, detail::kCdfSeed);
}

/// P(Y <= upper) for Y ~ N(mu, Sigma).
inline CdfEstimate mvn_cdf_estimate(const Vector& upper, const Vector& mu, const Matrix& sigma,
                                    double tol = kDefaultCdfTol) {
  require(upper.size() == mu.size() && sigma.rows() == mu.size() && sigma.cols() == mu.size(),
          ErrorCode::InvalidArgument, "mvn_cdf dimension mismatch");
  require(mu.size() <= kMaxCdfDim, ErrorCode::UnsupportedDimension,
          "multivariate CDF supports at most 12 dimensions, got " + std::to_string(mu.size()));
  require(tol >= 1e-8, ErrorCode::InvalidArgument, "mvn_cdf tolerance must be >= 1e-8");
  require((sigma.diagonal().array() > 0.0).all(), ErrorCode::NotPositiveDefinite, "Sigma has a non-positive variance");
  const auto sc = decompose(sigma);
  const Vector z = (upper - mu).cwiseQuotient(sc.scales);
  return std_mvn_cdf(z, sc.correlation, tol);
}

// ---------------------------------------------------------------------------
// Student-t via the Gamma scale mixture.

namespace detail {

struct QuadratureRule {
  Vector nodes;
  Vector weights;  // normalized to sum to one
};

/// Generalized Gauss-Laguerre rule for the weight x^alpha e^-x (Golub-Welsch),
/// with weights normalized to a probability measure.
inline QuadratureRule gauss_laguerre(int n, double alpha) {
  Matrix J = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    J(k, k) = 2.0 * k + alpha + 1.0;
    if (k + 1 < n) {
      const double off = std::sqrt((k + 1.0) * (k + 1.0 + alpha));
      J(k, k + 1) = off;
      J(k + 1, k) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  QuadratureRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights = es.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return rule;
}

inline constexpr int kLaguerreNodes = 64;

/// E[g(sqrt(W))] for W ~ Gamma(nu/2, rate nu/2). g(s) is split into its even
/// and odd parts in s; the even part is smooth in x = nu W / 2 and the odd
/// part is sqrt(x) times a smooth function, so each is integrated with its own
/// generalized Gauss-Laguerre rule (alpha = nu/2 - 1 and alpha + 1/2).
template <class G>
double gamma_scale_expectation(double nu, G&& g) {
  const double alpha = 0.5 * nu - 1.0;
  const auto even_rule = gauss_laguerre(kLaguerreNodes, alpha);
  const auto odd_rule = gauss_laguerre(kLaguerreNodes, alpha + 0.5);
  const double odd_norm = std::exp(std::lgamma(alpha + 1.5) - std::lgamma(alpha + 1.0));
  double even = 0.0, odd = 0.0;
  // g is bounded by one, so nodes with negligible weight are skipped.
  constexpr double kNegligible = 1e-15;
  for (int k = 0; k < kLaguerreNodes; ++k) {
    if (even_rule.weights(k) > kNegligible) {
      const double s = std::sqrt(2.0 * even_rule.nodes(k) / nu);
      even += even_rule.weights(k) * 0.5 * (g(s) + g(-s));
    }
    const double x = odd_rule.nodes(k);
    if (odd_rule.weights(k) / std::sqrt(x) > kNegligible) {
      const double s2 = std::sqrt(2.0 * x / nu);
      odd += odd_rule.weights(k) * 0.5 * (g(s2) - g(-s2)) / std::sqrt(x);
    }
  }
  return even + odd_norm * odd;
}

inline constexpr double kGaussianLimitNu = 1e8;

}  // namespace detail

/// Standardized P(Z/sqrt(W) <= upper), Z ~ N(0, corr), W ~ Gamma(nu/2, nu/2).
inline CdfEstimate std_mvt_cdf(const Vector& upper, const Matrix& corr, double nu, double tol = kDefaultCdfTol) {
  require(nu > 0.0, ErrorCode::InvalidArgument, "mvt_cdf needs nu > 0");
  std::vector<Index> active;
  for (Index i = 0; i < upper.size(); ++i) {
    if (upper(i) == -std::numeric_limits<double>::infinity() || std::isnan(upper(i))) return {0.0, 0.0};
    if (upper(i) != std::numeric_limits<double>::infinity()) active.push_back(i);
  }
  const auto d = static_cast<Index>(active.size());
  require(d <= kMaxCdfDim, ErrorCode::UnsupportedDimension,
          "multivariate CDF supports at most 12 dimensions, got " + std::to_string(d));
  if (d == 0) return {1.0, 0.0};
  if (d == 1) return {t_std_cdf(upper(active[0]), nu), 0.0};
  if (nu >= detail::kGaussianLimitNu) return std_mvn_cdf(upper, corr, tol);
  const Vector b = select(upper, active);
  const Matrix c = select(corr, active, active);
  double worst_error = 0.0;
  const double value = detail::gamma_scale_expectation(nu, [&](double s) {
    const auto e = std_mvn_cdf(b * s, c, tol);
    worst_error = std::max(worst_error, e.error);
    return e.value;
  });
  return {std::clamp(value, 0.0, 1.0), worst_error};
}

inline CdfEstimate mvt_cdf_estimate(const Vector& upper, const Vector& mu, const Matrix& sigma, double nu,
                                    double tol = kDefaultCdfTol) {
  require(upper.size() == mu.size() && sigma.rows() == mu.size() && sigma.cols() == mu.size(),
          ErrorCode::InvalidArgument, "mvt_cdf dimension mismatch");
  require(mu.size() <= kMaxCdfDim, ErrorCode::UnsupportedDimension,
          "multivariate CDF supports at most 12 dimensions, got " + std::to_string(mu.size()));
  require(tol >= 1e-8, ErrorCode::InvalidArgument, "mvt_cdf tolerance must be >= 1e-8");
  require((sigma.diagonal().array() > 0.0).all(), ErrorCode::NotPositiveDefinite, "Sigma has a non-positive variance");
  const auto sc = decompose(sigma);
  const Vector z = (upper - mu).cwiseQuotient(sc.scales);
  return std_mvt_cdf(z, sc.correlation, nu, tol);
}

}  // namespace msrisk

#pragma once

// Densities, CDFs and tail conditional expectations for Gaussian and
// Student-t laws and their finite mixtures.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "msrisk/core.hpp"
#include "msrisk/mvcdf.hpp"
#include "msrisk/special.hpp"

namespace msrisk {

// ---------------------------------------------------------------------------
// Densities

/// Gaussian log-density from a precomputed Cholesky factor of Sigma.
inline double mvn_logpdf(const Vector& x, const Vector& mu, const Eigen::LLT<Matrix>& llt) {
  const Vector r = llt.matrixL().solve(x - mu);
  const double d = static_cast<double>(x.size());
  return -0.5 * r.squaredNorm() - 0.5 * log_det_from_cholesky(llt) - d * kLogSqrt2Pi;
}

inline double mvn_logpdf(const Vector& x, const Vector& mu, const Matrix& sigma) {
  require(x.size() == mu.size() && sigma.rows() == mu.size(), ErrorCode::InvalidArgument, "mvn_logpdf dimension mismatch");
  return mvn_logpdf(x, mu, cholesky(sigma));
}

/// Squared Mahalanobis distance (x-mu)' Sigma^{-1} (x-mu).
inline double mahalanobis2(const Vector& x, const Vector& mu, const Eigen::LLT<Matrix>& llt) {
  return llt.matrixL().solve(x - mu).squaredNorm();
}

inline double mvt_logpdf_from_m2(double m2, double log_det, double d, double nu) {
  return log_gamma_half_ratio(nu, d) - 0.5 * d * std::log(nu * std::numbers::pi) - 0.5 * log_det -
         0.5 * (nu + d) * std::log1p(m2 / nu);
}

inline double mvt_logpdf(const Vector& x, const Vector& mu, const Eigen::LLT<Matrix>& llt, double nu) {
  return mvt_logpdf_from_m2(mahalanobis2(x, mu, llt), log_det_from_cholesky(llt), static_cast<double>(x.size()), nu);
}

inline double mvt_logpdf(const Vector& x, const Vector& mu, const Matrix& sigma, double nu) {
  require(x.size() == mu.size() && sigma.rows() == mu.size(), ErrorCode::InvalidArgument, "mvt_logpdf dimension mismatch");
  require(nu > 0.0, ErrorCode::InvalidArgument, "mvt_logpdf needs nu > 0");
  return mvt_logpdf(x, mu, cholesky(sigma), nu);
}

/// Log-density of one mixture component.
inline double component_logpdf(const MixtureComponent& c, const Vector& x) {
  return c.nu ? mvt_logpdf(x, c.mu, c.Sigma, *c.nu) : mvn_logpdf(x, c.mu, c.Sigma);
}

/// Log-density of the whole mixture (log-sum-exp over components).
inline double mixture_logpdf(const MixtureDistribution& mix, const Vector& x) {
  std::vector<double> terms;
  double mx = -std::numeric_limits<double>::infinity();
  for (Index l = 0; l < mix.size(); ++l) {
    if (mix.weights(l) <= 0.0) continue;
    const double v = std::log(mix.weights(l)) + component_logpdf(mix.components[static_cast<std::size_t>(l)], x);
    terms.push_back(v);
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : terms) s += std::exp(v - mx);
  return mx + std::log(s);
}

// ---------------------------------------------------------------------------
// CDFs

/// Componentwise upper thresholds y~ of a lower-orthant event {Y <= y~}.
struct TruncationBox {
  Vector upper;
};

inline double mvn_cdf(const TruncationBox& box, const Vector& mu, const Matrix& sigma, double tol = kDefaultCdfTol) {
  return mvn_cdf_estimate(box.upper, mu, sigma, tol).value;
}

inline double mvt_cdf(const TruncationBox& box, const Vector& mu, const Matrix& sigma, double nu,
                      double tol = kDefaultCdfTol) {
  return mvt_cdf_estimate(box.upper, mu, sigma, nu, tol).value;
}

/// CDF of a univariate mixture at y.
inline double mixture_cdf_uni(const MixtureDistribution& mix, double y) {
  require(mix.dim() == 1, ErrorCode::InvalidArgument, "mixture_cdf_uni needs a univariate mixture");
  double f = 0.0;
  for (Index l = 0; l < mix.size(); ++l) {
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    const double s = std::sqrt(c.Sigma(0, 0));
    const double z = (y - c.mu(0)) / s;
    f += mix.weights(l) * (c.nu ? t_std_cdf(z, *c.nu) : normal_cdf(z));
  }
  return std::clamp(f, 0.0, 1.0);
}

inline double mixture_pdf_uni(const MixtureDistribution& mix, double y) {
  require(mix.dim() == 1, ErrorCode::InvalidArgument, "mixture_pdf_uni needs a univariate mixture");
  double f = 0.0;
  for (Index l = 0; l < mix.size(); ++l) {
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    const double s = std::sqrt(c.Sigma(0, 0));
    const double z = (y - c.mu(0)) / s;
    f += mix.weights(l) * (c.nu ? std::exp(t_std_logpdf(z, *c.nu)) : normal_pdf(z)) / s;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Univariate tail conditional expectations E[Y | Y <= y^]

struct TailExpectation {
  double value = 0.0;
  bool asymptotic = false;  // set when the tail mass underflowed and the Mills-ratio expansion was used
};

inline constexpr double kGaussianUnderflowZ = -38.0;

inline TailExpectation tce_gaussian_uni(double yhat, double mu, double sigma2) {
  require(sigma2 > 0.0, ErrorCode::InvalidArgument, "tce_gaussian_uni needs sigma2 > 0");
  const double s = std::sqrt(sigma2);
  const double z = (yhat - mu) / s;
  if (z < kGaussianUnderflowZ) {
    const double a = std::abs(z);
    return {mu + s * (-a - 1.0 / a), true};
  }
  if (z == std::numeric_limits<double>::infinity()) return {mu, false};
  return {mu - s * normal_pdf(z) / normal_cdf(z), false};
}

inline double tce_student_uni(double yhat, double mu, double sigma2, double nu) {
  require(sigma2 > 0.0, ErrorCode::InvalidArgument, "tce_student_uni needs sigma2 > 0");
  require(nu > 1.0, ErrorCode::DivergentTail, "tail mean diverges for nu <= 1");
  const double s = std::sqrt(sigma2);
  const double a = (yhat - mu) / s;
  const double mass = t_std_cdf(a, nu);
  require(mass > 1e-300, ErrorCode::Underflow, "Student-t tail mass underflows");
  return mu - s * t_partial_expectation_kernel(a, nu) / mass;
}

namespace detail {
/// Tail mass F_l(y^) and partial expectation E[Y 1{Y <= y^}] of a univariate component.
struct TailPiece {
  double mass = 0.0;
  double partial = 0.0;
};

inline TailPiece tail_piece_uni(const MixtureComponent& c, double yhat) {
  const double mu = c.mu(0);
  const double s = std::sqrt(c.Sigma(0, 0));
  const double a = (yhat - mu) / s;
  if (c.nu) {
    require(*c.nu > 1.0, ErrorCode::DivergentTail, "tail mean diverges for nu <= 1");
    const double m = t_std_cdf(a, *c.nu);
    return {m, mu * m - s * t_partial_expectation_kernel(a, *c.nu)};
  }
  const double m = normal_cdf(a);
  return {m, mu * m - s * (std::isinf(a) ? 0.0 : normal_pdf(a))};
}
}  // namespace detail

/// E[Y | Y <= y^] for a univariate mixture: CDF-weighted combination of the
/// component tail means.
inline double tce_mixture_uni(const MixtureDistribution& mix, double yhat) {
  require(mix.dim() == 1, ErrorCode::InvalidArgument, "tce_mixture_uni needs a univariate mixture");
  double mass = 0.0, partial = 0.0;
  for (Index l = 0; l < mix.size(); ++l) {
    const auto piece = detail::tail_piece_uni(mix.components[static_cast<std::size_t>(l)], yhat);
    mass += mix.weights(l) * piece.mass;
    partial += mix.weights(l) * piece.partial;
  }
  require(mass >= 1e-300, ErrorCode::Underflow, "total tail mass underflows below y^");
  return partial / mass;
}

// ---------------------------------------------------------------------------
// Multivariate tail conditional expectations E[Y | Y <= y~]

namespace detail {

/// Mass P(Z <= zt) and partial expectation E[Z 1{Z <= zt}] for a standardized
/// Gaussian (nu empty) or Student-t vector with correlation C. The partial
/// expectation z^ solves A z^ = b with a_jj = 1, a_{j,-j} = -beta_j where
/// beta_j = C_{-j,-j}^{-1} C_{-j,j} are the regression coefficients of Z_j on
/// the other coordinates.
struct StdTail {
  double mass = 0.0;
  Vector partial;
};

inline StdTail std_tail(const Vector& zt, const Matrix& C, std::optional<double> nu, double tol) {
  const Index d = zt.size();
  require(d <= kMaxCdfDim, ErrorCode::UnsupportedDimension,
          "multivariate TCE supports at most 12 dimensions, got " + std::to_string(d));
  if (nu) require(*nu > 1.0, ErrorCode::DivergentTail, "tail mean diverges for nu <= 1");
  StdTail out;
  out.mass = nu ? std_mvt_cdf(zt, C, *nu, tol).value : std_mvn_cdf(zt, C, tol).value;
  Matrix A = Matrix::Identity(d, d);
  Vector b = Vector::Zero(d);
  for (Index j = 0; j < d; ++j) {
    std::vector<Index> rest;
    for (Index k = 0; k < d; ++k)
      if (k != j) rest.push_back(k);
    const double a = zt(j);
    Vector beta = Vector::Zero(d - 1);
    double s2 = 1.0;
    Matrix R;
    Vector v;
    if (d > 1) {
      const Matrix Crr = select(C, rest, rest);
      const Vector crj = select(Vector(C.col(j)), rest);
      beta = cholesky(Crr, "correlation block").solve(crj);
      s2 = 1.0 - crj.dot(beta);
      R = Crr - crj * crj.transpose();
      v.resize(d - 1);
      for (Index k = 0; k < d - 1; ++k) {
        const double up = zt(rest[static_cast<std::size_t>(k)]);
        v(k) = std::isinf(up) ? up : up - crj(k) * a;
      }
    }
    for (Index k = 0; k < d - 1; ++k) A(j, rest[static_cast<std::size_t>(k)]) = -beta(k);
    if (std::isinf(a)) continue;  // density factor vanishes at +-inf
    require(s2 > 0.0, ErrorCode::NotPositiveDefinite, "correlation matrix is singular");
    double cond = 1.0;
    double dens;
    if (nu) {
      dens = t_partial_expectation_kernel(a, *nu);
      if (d > 1) {
        const double k = std::sqrt((*nu - 1.0) / (*nu + a * a));
        cond = mvt_cdf_estimate(v * k, Vector::Zero(d - 1), R, *nu - 1.0, tol).value;
      }
    } else {
      dens = normal_pdf(a);
      if (d > 1) cond = mvn_cdf_estimate(v, Vector::Zero(d - 1), R, tol).value;
    }
    b(j) = -s2 * dens * cond;
  }
  out.partial = A.partialPivLu().solve(b);
  return out;
}

inline void check_correlation(const Matrix& C) {
  require(C.rows() == C.cols(), ErrorCode::InvalidArgument, "correlation matrix must be square");
  require((C.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-10, ErrorCode::InvalidArgument,
          "correlation matrix must have a unit diagonal");
  require(max_asymmetry(C) <= kSymmetryTol, ErrorCode::InvalidArgument, "correlation matrix must be symmetric");
  cholesky(C, "correlation matrix");
}

inline Vector tce_standardized(const TruncationBox& box, const Vector& mu, const Vector& lambda, const Matrix& C,
                               std::optional<double> nu, double tol) {
  const Index d = mu.size();
  require(box.upper.size() == d && lambda.size() == d && C.rows() == d, ErrorCode::InvalidArgument,
          "TCE dimension mismatch");
  require((lambda.array() > 0.0).all(), ErrorCode::InvalidArgument, "Lambda must have positive diagonal");
  check_correlation(C);
  const Vector zt = (box.upper - mu).cwiseQuotient(lambda);
  const auto tail = std_tail(zt, C, nu, tol);
  require(tail.mass >= 1e-300, ErrorCode::Underflow, "tail mass underflows below y~");
  return mu + lambda.cwiseProduct(tail.partial) / tail.mass;
}

}  // namespace detail

/// E[Y | Y <= y~] for Y ~ N(mu, Lambda C Lambda), Lambda = diag(lambda).
inline Vector tce_mvn(const TruncationBox& box, const Vector& mu, const Vector& lambda, const Matrix& C,
                      double tol = kDefaultCdfTol) {
  return detail::tce_standardized(box, mu, lambda, C, std::nullopt, tol);
}

/// E[Y | Y <= y~] for Y ~ t(mu, Lambda C Lambda, nu), nu > 1.
inline Vector tce_mvt(const TruncationBox& box, const Vector& mu, const Vector& lambda, const Matrix& C, double nu,
                      double tol = kDefaultCdfTol) {
  require(nu > 1.0, ErrorCode::DivergentTail, "tail mean diverges for nu <= 1");
  return detail::tce_standardized(box, mu, lambda, C, nu, tol);
}

/// E[Y | Y <= y~] for a multivariate mixture: components weighted by
/// eta_l times their own mass below y~.
inline Vector tce_mixture_mv(const MixtureDistribution& mix, const TruncationBox& box, double tol = kDefaultCdfTol) {
  mix.validate();
  const Index d = mix.dim();
  require(box.upper.size() == d, ErrorCode::InvalidArgument, "truncation box dimension mismatch");
  double mass = 0.0;
  Vector num = Vector::Zero(d);
  for (Index l = 0; l < mix.size(); ++l) {
    if (mix.weights(l) <= 0.0) continue;
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    const auto sc = decompose(c.Sigma);
    cholesky(c.Sigma);
    const Vector zt = (box.upper - c.mu).cwiseQuotient(sc.scales);
    const auto tail = detail::std_tail(zt, sc.correlation, c.nu, tol);
    mass += mix.weights(l) * tail.mass;
    num += mix.weights(l) * (c.mu * tail.mass + sc.scales.cwiseProduct(tail.partial));
  }
  require(mass >= 1e-300, ErrorCode::Underflow, "total tail mass underflows below y~");
  return num / mass;
}

}  // namespace msrisk
